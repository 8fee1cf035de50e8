"""Variable neighborhood search over coordinated routes.

Working encoding (`Plan`): the truck's customer visit order, a drone
assignment mapping customer -> (anchor, anchor) node pair (depot allowed
at the route ends; the earlier node in the current order launches), and a
recharge choice per adjacent node pair (index of a multigraph arc). Moves
edit the order and the assignment; recharge choices are keyed by node
pair so they survive edits that keep the pair adjacent, and the
station-insertion repair re-adds whatever an edit broke.

Construction is savings-based: depot round trips merged by largest
saving, with a station-insertion rescue before a merge is rejected; then
customers are greedily handed to the drone while that pays. The descent
cycles the configured operators with first-improvement and restarts from
the first operator after each win; shaking applies a double bridge plus a
few random mode relocations and repairs the result.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field

from .core import Instance
from .multigraph import MultiGraph, build_multigraph
from .routes import (CoordinatedRoute, RouteStructureError, Sortie,
                     evaluate_route, feasible_sorties)

_TOL = 1e-9

OPERATOR_NAMES = (
    "make_fly", "push_left", "push_right", "two_opt",
    "exchange_1_1", "exchange_2_1", "exchange_2_2", "relocate_customer",
    "exchange_3_1", "exchange_3_2", "reinsert_cs",
)


class McwsFailure(RuntimeError):
    """No energy-feasible truck tour found; the instance is rejected."""


@dataclass
class VnsConfig:
    max_iteration: int = 200
    max_stopping: int = 50
    operator_order: tuple[int, ...] = tuple(range(len(OPERATOR_NAMES)))
    shake_strength: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_iteration < 0 or self.max_stopping < 0:
            raise ValueError("iteration budgets must be non-negative")
        if sorted(self.operator_order) != list(range(len(OPERATOR_NAMES))):
            raise ValueError("operator_order must permute all operators")


@dataclass
class VnsResult:
    cost: float
    route: CoordinatedRoute
    iterations: int
    shakes: int
    wall_time_s: float
    seed: int

    def csv_row(self) -> dict:
        return {"cost": self.cost, "iterations": self.iterations,
                "shakes": self.shakes, "wall_time_s": self.wall_time_s,
                "seed": self.seed}


@dataclass
class Plan:
    seq: list[int]
    drone: dict[int, tuple[int, int]] = field(default_factory=dict)
    arcp: dict[tuple[int, int], int] = field(default_factory=dict)

    def copy(self) -> "Plan":
        return Plan(list(self.seq), dict(self.drone), dict(self.arcp))


def _hop_arc(graph: MultiGraph, a: int, b: int, p: int):
    bucket = graph.arcs.get((a, b))
    if not bucket:
        return None
    for arc in bucket:
        if arc.p == p:
            return arc
    # the chosen variant is gone (or the direct arc never existed):
    # cheapest remaining option
    return min(bucket, key=lambda x: (x.time, x.p))


def plan_route(inst: Instance, graph: MultiGraph,
               plan: Plan) -> CoordinatedRoute | None:
    """Materialize the encoding; None when the assignment cannot form a
    valid coordinated route (missing arc, overlapping anchors, ...)."""
    dep = inst.depot
    path = [dep] + plan.seq + [dep]
    arcs = []
    for a, b in zip(path, path[1:]):
        arc = _hop_arc(graph, a, b, plan.arcp.get((a, b), 0))
        if arc is None:
            return None
        arcs.append(arc)
    pos = {}
    for ix, u in enumerate(path):
        if u != dep:
            pos[u] = ix
    last = len(path) - 1
    sorties = []
    for j, (x, y) in plan.drone.items():
        px = 0 if x == dep else pos.get(x)
        py = last if y == dep else pos.get(y)
        if px is None or py is None:
            return None
        l, r = (px, py) if px <= py else (py, px)
        sorties.append((l, j, r))
    sorties.sort()
    return CoordinatedRoute(tuple(arcs), tuple(sorties), ())


def _score(inst: Instance, graph: MultiGraph, plan: Plan):
    """(cost, route, eval) or None when structurally invalid."""
    route = plan_route(inst, graph, plan)
    if route is None:
        return None
    try:
        ev = evaluate_route(inst, route)
    except RouteStructureError:
        return None
    return ev.total_time, route, ev


def _energy_issue(violation: str | None) -> bool:
    return violation is not None and ("batter" in violation
                                      or "needs" in violation)


def gain_feasibility(inst: Instance, graph: MultiGraph,
                     plan: Plan) -> Plan | None:
    """Repair energy violations by swapping hops to recharge arcs, the
    cheapest time-add first among swaps that push the first violation
    forward. None when no swap sequence works."""
    cur = plan.copy()
    for _ in range(4 * (len(cur.seq) + 2)):
        scored = _score(inst, graph, cur)
        if scored is None:
            return None
        _, route, ev = scored
        if ev.feasible:
            return cur
        if not _energy_issue(ev.violation):
            return None
        vp = ev.violation_pos if ev.violation_pos is not None else len(route.arcs)
        best = None
        path = route.truck_path
        for h in range(min(vp + 1, len(route.arcs))):
            pair = (path[h], path[h + 1])
            used = route.arcs[h]
            for arc in graph.arcs.get(pair, ()):
                if arc.p == used.p or not arc.refuel:
                    continue
                trial = cur.copy()
                trial.arcp[pair] = arc.p
                s2 = _score(inst, graph, trial)
                if s2 is None:
                    continue
                ev2 = s2[2]
                ok = ev2.feasible or (_energy_issue(ev2.violation)
                                      and ev2.violation_pos is not None
                                      and ev2.violation_pos > vp)
                if not ok:
                    continue
                key = (arc.time - used.time, h, arc.p)
                if best is None or key < best[0]:
                    best = (key, trial)
        if best is None:
            return None
        cur = best[1]
    return None


def _repair_and_score(inst, graph, plan):
    rep = gain_feasibility(inst, graph, plan)
    if rep is None:
        return None
    scored = _score(inst, graph, rep)
    if scored is None or not scored[2].feasible:
        return None
    return scored[0], rep


# --- construction -----------------------------------------------------------

def mcws_initial(inst: Instance, graph: MultiGraph) -> Plan:
    """Savings merge of depot round trips into one energy-feasible truck
    tour, repairing merges with station insertions before giving up."""
    dep = inst.depot
    ct = inst.c_T
    parts: list[Plan] = []
    for c in sorted(inst.customers):
        feas = _repair_and_score(inst, graph, Plan([c]))
        if feas is None:
            raise McwsFailure(f"customer {c} unreachable as a round trip")
        parts.append(feas[1])
    while len(parts) > 1:
        merges = []
        for ia, pa in enumerate(parts):
            for ib, pb in enumerate(parts):
                if ia == ib:
                    continue
                i, j = pa.seq[-1], pb.seq[0]
                saving = float(ct[i][dep] + ct[dep][j] - ct[i][j])
                merges.append((-saving, i, j, ia, ib))
        merges.sort()
        done = None
        for _, _, _, ia, ib in merges:
            pa, pb = parts[ia], parts[ib]
            trial = Plan(pa.seq + pb.seq, {}, {**pa.arcp, **pb.arcp})
            feas = _repair_and_score(inst, graph, trial)
            if feas is not None:
                done = (ia, ib, feas[1])
                break
        if done is None:
            raise McwsFailure("no feasible savings merge remains")
        ia, ib, merged = done
        parts = [p for ix, p in enumerate(parts) if ix not in (ia, ib)]
        parts.append(merged)
    return parts[0]


def _anchor_pairs(inst, catalog, plan: Plan, j: int):
    """Valid (x, y) anchor node pairs for handing j to the drone, j
    already removed from the sequence. Ordered deterministically."""
    dep = inst.depot
    order = [dep] + plan.seq + [dep]
    n = len(order)
    spans = []
    pos = {u: ix for ix, u in enumerate(order[1:-1], start=1)}
    for c, (x, y) in plan.drone.items():
        px = 0 if x == dep else pos.get(x)
        py = n - 1 if y == dep else pos.get(y)
        if px is None or py is None:
            return []  # a span anchors off the truck path; nothing fits
        spans.append((min(px, py), max(px, py)))
    out = []
    for a in range(n - 1):
        for b in range(a + 1, n):
            if a == 0 and b == n - 1:
                continue
            x, y = order[a], order[b]
            if (x, j, y) not in catalog:
                continue
            if any(not (b <= l or r <= a) for l, r in spans):
                continue
            out.append((x, y))
    return out


def make_fly(inst: Instance, graph: MultiGraph, catalog, plan: Plan) -> Plan:
    """Greedily hand customers to the drone, largest saving first, while
    the repaired route stays feasible."""
    state = _repair_and_score(inst, graph, plan)
    if state is None:
        raise ValueError("make_fly needs a repairable input plan")
    cost, cur = state
    while True:
        best = None
        for t in list(cur.seq):
            reduced = cur.copy()
            reduced.seq.remove(t)
            if not reduced.seq and not reduced.drone:
                continue
            for x, y in _anchor_pairs(inst, catalog, reduced, t):
                trial = reduced.copy()
                trial.drone[t] = (x, y)
                res = _repair_and_score(inst, graph, trial)
                if res is None:
                    continue
                saving = cost - res[0]
                if saving > _TOL and (best is None or saving > best[0] + _TOL):
                    best = (saving, res[0], res[1])
        if best is None:
            return cur
        cost, cur = best[1], best[2]


# --- operators --------------------------------------------------------------

def _op_make_fly(inst, graph, catalog, cost, plan, rng):
    for t in list(plan.seq):
        reduced = plan.copy()
        reduced.seq.remove(t)
        if not reduced.seq and not reduced.drone:
            continue
        for x, y in _anchor_pairs(inst, catalog, reduced, t):
            trial = reduced.copy()
            trial.drone[t] = (x, y)
            res = _repair_and_score(inst, graph, trial)
            if res is not None and res[0] < cost - _TOL:
                return res
    return None


def _shift_anchor(inst, graph, catalog, cost, plan, side):
    dep = inst.depot
    order = [dep] + plan.seq + [dep]
    pos = {u: ix for ix, u in enumerate(order)}
    pos[dep] = 0
    for j in sorted(plan.drone):
        x, y = plan.drone[j]
        px = 0 if x == dep else pos[x]
        py = len(order) - 1 if y == dep else pos[y]
        (lx, lp), (rx, rp) = sorted(((x, px), (y, py)), key=lambda t: t[1])
        if side == "left":
            if lp == 0:
                continue
            new = (order[lp - 1], rx)
        else:
            if rp == len(order) - 1:
                continue
            new = (lx, order[rp + 1])
        trial = plan.copy()
        trial.drone[j] = new
        res = _repair_and_score(inst, graph, trial)
        if res is not None and res[0] < cost - _TOL:
            return res
    return None


def _op_push_left(inst, graph, catalog, cost, plan, rng):
    return _shift_anchor(inst, graph, catalog, cost, plan, "left")


def _op_push_right(inst, graph, catalog, cost, plan, rng):
    return _shift_anchor(inst, graph, catalog, cost, plan, "right")


def _op_two_opt(inst, graph, catalog, cost, plan, rng):
    n = len(plan.seq)
    for a in range(n - 1):
        for b in range(a + 1, n):
            trial = plan.copy()
            trial.seq[a:b + 1] = reversed(trial.seq[a:b + 1])
            res = _repair_and_score(inst, graph, trial)
            if res is not None and res[0] < cost - _TOL:
                return res
    return None


def _exchange(inst, graph, catalog, cost, plan, rng, m, k):
    n = len(plan.seq)
    for i in range(n - m + 1):
        for j in range(n - k + 1):
            if j < i + m and i < j + k:
                continue
            trial = plan.copy()
            s = trial.seq
            if i < j:
                trial.seq = (s[:i] + s[j:j + k] + s[i + m:j]
                             + s[i:i + m] + s[j + k:])
            else:
                trial.seq = (s[:j] + s[i:i + m] + s[j + k:i]
                             + s[j:j + k] + s[i + m:])
            res = _repair_and_score(inst, graph, trial)
            if res is not None and res[0] < cost - _TOL:
                return res
    return None


def _op_exchange_1_1(inst, graph, catalog, cost, plan, rng):
    return _exchange(inst, graph, catalog, cost, plan, rng, 1, 1)


def _op_exchange_2_1(inst, graph, catalog, cost, plan, rng):
    return _exchange(inst, graph, catalog, cost, plan, rng, 2, 1)


def _op_exchange_2_2(inst, graph, catalog, cost, plan, rng):
    return _exchange(inst, graph, catalog, cost, plan, rng, 2, 2)


def _op_exchange_3_1(inst, graph, catalog, cost, plan, rng):
    return _exchange(inst, graph, catalog, cost, plan, rng, 3, 1)


def _op_exchange_3_2(inst, graph, catalog, cost, plan, rng):
    return _exchange(inst, graph, catalog, cost, plan, rng, 3, 2)


def _op_relocate(inst, graph, catalog, cost, plan, rng):
    n = len(plan.seq)
    for i in range(n):
        for k in range(n):
            if k == i:
                continue
            trial = plan.copy()
            c = trial.seq.pop(i)
            trial.seq.insert(k, c)
            res = _repair_and_score(inst, graph, trial)
            if res is not None and res[0] < cost - _TOL:
                return res
    return None


def _op_reinsert_cs(inst, graph, catalog, cost, plan, rng):
    used = sorted(pair for pair, p in plan.arcp.items() if p > 0)
    if not used:
        return None
    pair = used[rng.randrange(len(used))]
    trial = plan.copy()
    del trial.arcp[pair]
    res = _repair_and_score(inst, graph, trial)
    if res is not None and res[0] < cost - _TOL:
        return res
    return None


_OPERATORS = (
    _op_make_fly, _op_push_left, _op_push_right, _op_two_opt,
    _op_exchange_1_1, _op_exchange_2_1, _op_exchange_2_2, _op_relocate,
    _op_exchange_3_1, _op_exchange_3_2, _op_reinsert_cs,
)


def neighborhood(inst: Instance, graph: MultiGraph, catalog, l: int,
                 plan: Plan, rng: random.Random,
                 order: tuple[int, ...] | None = None):
    """Apply the l-th configured operator once (first improvement);
    returns (cost, plan) or None for identity."""
    order = order or tuple(range(len(_OPERATORS)))
    base = _repair_and_score(inst, graph, plan)
    if base is None:
        return None
    return _OPERATORS[order[l]](inst, graph, catalog, base[0], base[1], rng)


def _shake(inst, graph, catalog, plan: Plan, strength: int,
           rng: random.Random) -> Plan:
    customers = sorted(inst.customers)
    for _ in range(20):
        trial = plan.copy()
        if len(trial.seq) >= 4:
            n = len(trial.seq)
            a, b, c = sorted(rng.sample(range(1, n), 3))
            s = trial.seq
            trial.seq = s[:a] + s[b:c] + s[a:b] + s[c:]
        for _ in range(strength):
            c = customers[rng.randrange(len(customers))]
            if c in trial.drone:
                del trial.drone[c]
                trial.seq.insert(rng.randrange(len(trial.seq) + 1), c)
            elif c in trial.seq:
                reduced = trial.copy()
                reduced.seq.remove(c)
                if not reduced.seq and not reduced.drone:
                    continue
                pairs = _anchor_pairs(inst, catalog, reduced, c)
                if pairs:
                    reduced.drone[c] = pairs[rng.randrange(len(pairs))]
                    trial = reduced
        res = _repair_and_score(inst, graph, trial)
        if res is not None:
            return res[1]
    return plan


def vns_solve(inst: Instance, config: VnsConfig | None = None,
              graph: MultiGraph | None = None,
              catalog: dict[tuple[int, int, int], Sortie] | None = None
              ) -> VnsResult:
    t0 = time.perf_counter()
    cfg = config or VnsConfig()
    rng = random.Random(cfg.seed)
    if graph is None:
        graph = build_multigraph(inst)
    if catalog is None:
        catalog = feasible_sorties(inst)

    plan = make_fly(inst, graph, catalog, mcws_initial(inst, graph))
    best_cost, best = _repair_and_score(inst, graph, plan)
    cur_cost, cur = best_cost, best

    iters = 0
    shakes = 0
    stall = 0
    while iters < cfg.max_iteration and stall < cfg.max_stopping:
        iters += 1
        l = 0
        while l < len(_OPERATORS):
            op = _OPERATORS[cfg.operator_order[l]]
            res = op(inst, graph, catalog, cur_cost, cur, rng)
            if res is not None and res[0] < cur_cost - _TOL:
                cur_cost, cur = res
                l = 0
            else:
                l += 1
        if cur_cost < best_cost - _TOL:
            best_cost, best = cur_cost, cur
            stall = 0
        else:
            stall += 1
        if iters < cfg.max_iteration and stall < cfg.max_stopping:
            cur = _shake(inst, graph, catalog, best, cfg.shake_strength, rng)
            scored = _repair_and_score(inst, graph, cur)
            cur_cost, cur = scored
            shakes += 1

    route = plan_route(inst, graph, best)
    return VnsResult(cost=best_cost, route=route, iterations=iters,
                     shakes=shakes, wall_time_s=time.perf_counter() - t0,
                     seed=cfg.seed)
