"""Parallel-arc truck network: direct hops plus non-dominated recharge paths.

Between every ordered pair of customer-or-depot nodes the truck either
drives directly (arc p=0, battery strictly decreasing) or detours through
one or more charging stations (p>0). A recharge arc is summarized by three
numbers: the energy needed to reach its first station (e_req), the energy
left after its last station visit (e_rem = capacity - last hop), and its
total time including one fixed recharge stop per station visited. Only
Pareto-undominated recharge arcs are kept; direct arcs are always kept.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .core import Instance


@dataclass(frozen=True)
class MultiArc:
    i: int
    j: int
    p: int                  # 0 = direct, >0 = recharge path
    time: float             # hop times + charge_time per visited station
    e_req: float            # energy to the first trace hop
    e_rem: float | None     # battery after the final station hop; None iff p=0
    trace: tuple[int, ...]  # full node list i .. j

    @property
    def refuel(self) -> bool:
        return self.p > 0


class MultiGraph:
    def __init__(self, inst: Instance, arcs: dict[tuple[int, int], tuple[MultiArc, ...]],
                 refuel_pruned: int):
        self.inst = inst
        self.nodes = (inst.depot,) + inst.customers
        self.arcs = arcs
        self.refuel_pruned = refuel_pruned

    def bucket(self, i: int, j: int) -> tuple[MultiArc, ...]:
        return self.arcs.get((i, j), ())

    def arc(self, i: int, j: int, p: int) -> MultiArc:
        for a in self.bucket(i, j):
            if a.p == p:
                return a
        raise KeyError((i, j, p))

    def direct(self, i: int, j: int) -> MultiArc | None:
        b = self.bucket(i, j)
        if b and b[0].p == 0:
            return b[0]
        return None

    @property
    def n_direct(self) -> int:
        return sum(1 for b in self.arcs.values() for a in b if a.p == 0)

    @property
    def n_refuel(self) -> int:
        return sum(1 for b in self.arcs.values() for a in b if a.p > 0)

    @property
    def n_arcs(self) -> int:
        return sum(len(b) for b in self.arcs.values())

    def stats_line(self) -> str:
        n = len(self.nodes) - 1  # customers
        original = (n + 1) * n   # ordered customer/depot pairs in the base net
        ratio = self.n_arcs / original if original else 0.0
        return (f"pairs={len(self.arcs)} direct={self.n_direct} "
                f"refuel_kept={self.n_refuel} refuel_pruned={self.refuel_pruned} "
                f"ratio={ratio:.3f}")


def eliminate_arcs(inst: Instance) -> set[tuple[int, int]]:
    """Retained original arcs. Rule 1 drops anything beyond battery range;
    rule 2 drops a customer-to-customer hop that cannot be framed by any
    recharge-or-depot pair within one battery charge."""
    q = inst.params.truck_capacity
    e = inst.e_T
    anchors = (inst.depot,) + inst.stations
    n_all = len(inst.nodes)
    best_in = {i: min(e[s][i] for s in anchors) for i in range(n_all)}
    best_out = {j: min(e[j][t] for t in anchors) for j in range(n_all)}
    kept: set[tuple[int, int]] = set()
    cust = set(inst.customers)
    for i in range(n_all):
        for j in range(n_all):
            if i == j or e[i][j] > q:
                continue
            if i in cust and j in cust and best_in[i] + e[i][j] + best_out[j] > q:
                continue
            kept.add((i, j))
    return kept


def cs_shortest_paths(inst: Instance,
                      retained: set[tuple[int, int]] | None = None
                      ) -> dict[tuple[int, int], tuple[float, tuple[int, ...]]]:
    """All-pairs shortest station-to-station paths inside the station
    subgraph (arcs within battery range only). Path cost is truck time plus
    one charge stop per intermediate station, which is what the truck
    actually pays; with zero charge time this is plain Floyd-Warshall.
    Returns {(k,l): (cost, trace)} for reachable ordered pairs, k != l.
    """
    if retained is None:
        retained = eliminate_arcs(inst)
    stations = inst.stations
    f_s = inst.params.charge_time
    dist: dict[tuple[int, int], float] = {}
    nxt: dict[tuple[int, int], int] = {}
    for k, l in itertools.permutations(stations, 2):
        if (k, l) in retained:
            dist[(k, l)] = inst.c_T[k][l]
            nxt[(k, l)] = l
    for m in stations:
        for k in stations:
            if k == m or (k, m) not in dist:
                continue
            dkm = dist[(k, m)]
            for l in stations:
                if l == k or l == m or (m, l) not in dist:
                    continue
                cand = dkm + f_s + dist[(m, l)]
                if cand < dist.get((k, l), float("inf")) - 1e-12:
                    dist[(k, l)] = cand
                    nxt[(k, l)] = nxt[(k, m)]
    out = {}
    for (k, l), d in dist.items():
        trace = [k]
        cur = k
        while cur != l:
            cur = nxt[(cur, l)]
            trace.append(cur)
        out[(k, l)] = (d, tuple(trace))
    return out


def _refuel_arc(inst: Instance, i: int, j: int, stations: tuple[int, ...]) -> MultiArc:
    trace = (i,) + stations + (j,)
    time = sum(inst.c_T[a][b] for a, b in zip(trace, trace[1:]))
    time += inst.params.charge_time * len(stations)
    return MultiArc(i, j, -1, time, float(inst.e_T[i][stations[0]]),
                    inst.params.truck_capacity - float(inst.e_T[stations[-1]][j]),
                    trace)


def enumerate_refuel_paths(inst: Instance, i: int, j: int,
                           retained: set[tuple[int, int]],
                           rs: dict[tuple[int, int], tuple[float, tuple[int, ...]]]
                           ) -> list[MultiArc]:
    """Candidate bucket for (i, j) before dominance filtering: the direct
    arc if retained, every single-station detour, then every two-endpoint
    station path from the station shortest-path table. Order is the p-index
    assignment order."""
    q = inst.params.truck_capacity
    out: list[MultiArc] = []
    if (i, j) in retained:
        out.append(MultiArc(i, j, 0, float(inst.c_T[i][j]), float(inst.e_T[i][j]),
                            None, (i, j)))
    reach_in = [k for k in inst.stations if inst.e_T[i][k] <= q]
    reach_out = {l for l in inst.stations if inst.e_T[l][j] <= q}
    for k in reach_in:
        if k in reach_out:
            out.append(_refuel_arc(inst, i, j, (k,)))
    for k in reach_in:
        for l in inst.stations:
            if l == k or l not in reach_out or (k, l) not in rs:
                continue
            out.append(_refuel_arc(inst, i, j, rs[(k, l)][1]))
    return out


def dominates(a: MultiArc, b: MultiArc, tol: float = 1e-9) -> bool:
    """Recharge path a makes b redundant: no worse on entry energy, exit
    energy and time, strictly better on at least one. Direct arcs never
    take part (kept unconditionally)."""
    if a.e_rem is None or b.e_rem is None:
        raise ValueError("dominance is defined between recharge paths only")
    if a.e_req > b.e_req + tol or a.e_rem < b.e_rem - tol or a.time > b.time + tol:
        return False
    return (a.e_req < b.e_req - tol or a.e_rem > b.e_rem + tol
            or a.time < b.time - tol)


def _pareto_filter(cands: list[MultiArc], tol: float) -> tuple[list[MultiArc], int]:
    keep: list[MultiArc] = []
    pruned = 0
    for idx, c in enumerate(cands):
        dead = False
        for odx, other in enumerate(cands):
            if odx == idx:
                continue
            if dominates(other, c, tol):
                dead = True
                break
            # exact tie on the whole triple: first in generation order wins
            if odx < idx and abs(other.e_req - c.e_req) <= tol \
                    and abs(other.e_rem - c.e_rem) <= tol \
                    and abs(other.time - c.time) <= tol:
                dead = True
                break
        if dead:
            pruned += 1
        else:
            keep.append(c)
    return keep, pruned


def build_multigraph(inst: Instance) -> MultiGraph:
    retained = eliminate_arcs(inst)
    rs = cs_shortest_paths(inst, retained)
    tol = inst.params.tol
    nodes = (inst.depot,) + inst.customers
    arcs: dict[tuple[int, int], tuple[MultiArc, ...]] = {}
    pruned_total = 0
    for i, j in itertools.permutations(nodes, 2):
        cands = enumerate_refuel_paths(inst, i, j, retained, rs)
        if not cands:
            continue
        direct = [c for c in cands if c.p == 0]
        refuel, pruned = _pareto_filter([c for c in cands if c.p != 0], tol)
        pruned_total += pruned
        bucket = direct + [
            MultiArc(a.i, a.j, p, a.time, a.e_req, a.e_rem, a.trace)
            for p, a in enumerate(refuel, start=1)]
        if bucket:
            arcs[(i, j)] = tuple(bucket)
    return MultiGraph(inst, arcs, pruned_total)
