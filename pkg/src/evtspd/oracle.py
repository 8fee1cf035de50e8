"""Exhaustive reference solver for tiny instances.

Enumerates every route structure (service mode per customer, truck
permutation, sortie anchor spans, loop anchors) and, per structure, every
combination of recharge-path choices hop by hop, scoring candidates with
the route evaluator. Pruning drops arc combinations that are battery
infeasible under the evaluator's own update rule or provably no better
than the best cost found; toggling it never changes the returned cost.

Intended as ground truth in tests; refuses instances with more than six
customers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .core import Instance
from .multigraph import MultiGraph, build_multigraph
from .routes import (CoordinatedRoute, evaluate_route, feasible_loops,
                     feasible_sorties, loop_energy, modified_time,
                     sortie_energy)

_EPS = 1e-9
MAX_CUSTOMERS = 6


@dataclass
class OracleResult:
    cost: float
    route: CoordinatedRoute | None
    counts: dict[str, int]

    @property
    def feasible(self) -> bool:
        return self.route is not None


def _span_combos(js, path, catalog, last):
    """Non-overlapping sortie span assignments for the customers js, each
    yielded as a position-sorted tuple of (launch_pos, j, retrieve_pos)."""
    if not js:
        yield ()
        return
    pairs_of = {}
    for j in js:
        opts = []
        for l in range(last):
            for r in range(l + 1, last + 1):
                if l == 0 and r == last:
                    continue  # start-to-end span is banned outright
                if (path[l], j, path[r]) not in catalog:
                    continue
                opts.append((l, r))
        if not opts:
            return
        pairs_of[j] = opts

    def rec(ix, chosen):
        if ix == len(js):
            yield tuple(sorted((l, j, r) for j, (l, r) in chosen))
            return
        j = js[ix]
        for l, r in pairs_of[j]:
            if all(r <= l2 or r2 <= l for _, (l2, r2) in chosen):
                yield from rec(ix + 1, chosen + [(j, (l, r))])

    yield from rec(0, [])


def _loop_combos(js, path, loops_cat, spans, last):
    if not js:
        yield ()
        return
    opts_of = []
    for j in js:
        opts = [a for a in range(last)
                if (path[a], j) in loops_cat
                and not any(l < a < r for l, _, r in spans)]
        if not opts:
            return
        opts_of.append(opts)
    for combo in itertools.product(*opts_of):
        yield tuple(sorted(zip(combo, js)))


def brute_force(inst: Instance, graph: MultiGraph | None = None,
                prune: bool = True) -> OracleResult:
    cust = sorted(inst.customers)
    if len(cust) > MAX_CUSTOMERS:
        raise ValueError(f"oracle capped at {MAX_CUSTOMERS} customers")
    if graph is None:
        graph = build_multigraph(inst)
    catalog = feasible_sorties(inst)
    loops_cat = feasible_loops(inst)
    dep = inst.depot

    modes = ("T", "D", "L") if loops_cat else ("T", "D")
    counts = {"structures": 0, "candidates": 0, "evaluated": 0, "pruned": 0}
    state = [float("inf"), None, None]  # cost, tie key, route

    for assign in itertools.product(modes, repeat=len(cust)):
        truck = [c for c, m in zip(cust, assign) if m == "T"]
        drone = [c for c, m in zip(cust, assign) if m == "D"]
        loopc = [c for c, m in zip(cust, assign) if m == "L"]
        for perm in itertools.permutations(truck):
            path = (dep,) + perm + (dep,)
            last = len(path) - 1
            hops = list(zip(path, path[1:]))
            buckets = [graph.arcs.get(h) for h in hops]
            if any(not b for b in buckets):
                continue
            tail = [0.0] * (len(hops) + 1)
            for h in range(len(hops) - 1, -1, -1):
                tail[h] = tail[h + 1] + min(modified_time(inst, a)
                                            for a in buckets[h])
            for spans in _span_combos(drone, path, catalog, last):
                for loops in _loop_combos(loopc, path, loops_cat, spans,
                                          last):
                    counts["structures"] += 1
                    _arc_dfs(inst, path, hops, buckets, tail, spans, loops,
                             prune, counts, state)

    return OracleResult(cost=state[0], route=state[2], counts=counts)


def _arc_dfs(inst, path, hops, buckets, tail, spans, loops, prune, counts,
             state):
    """Enumerate arc choices for one structure, tracking the battery the
    way the evaluator does and rescoring full candidates with it."""
    drain = [0.0] * len(path)
    for pos, j in loops:
        drain[pos] += loop_energy(inst, path[pos], j)
    for l, j, r in spans:
        drain[l] += sortie_energy(inst, path[l], j, path[r])

    n = len(hops)
    chosen = [None] * n

    def rec(h, t, q):
        q -= drain[h]
        if prune and q < -_EPS:
            counts["pruned"] += 1
            return
        if h == n:
            counts["candidates"] += 1
            route = CoordinatedRoute(tuple(chosen), spans, loops)
            ev = evaluate_route(inst, route)
            counts["evaluated"] += 1
            if not ev.feasible:
                return
            key = (tuple((a.i, a.j, a.p) for a in route.arcs), spans, loops)
            if (ev.total_time < state[0] - _EPS
                    or (abs(ev.total_time - state[0]) <= _EPS
                        and (state[1] is None or key < state[1]))):
                state[0], state[1], state[2] = ev.total_time, key, route
            return
        if prune and t + tail[h] > state[0] + _EPS:
            counts["pruned"] += 1
            return
        for arc in buckets[h]:
            if prune and q < arc.e_req - _EPS:
                counts["pruned"] += 1
                continue
            chosen[h] = arc
            rec(h + 1, t + modified_time(inst, arc),
                arc.e_rem if arc.p else q - arc.e_req)
        chosen[h] = None

    rec(0, 0.0, inst.params.truck_capacity)
