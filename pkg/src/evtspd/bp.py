"""Branch and price over complete coordinated routes.

One vehicle pair means the set-partitioning master picks a single column,
so branching decisions translate directly into pricing restrictions and
into a per-node filter on the shared column pool. The branching hierarchy
scans drone-customer values first, then truck-alone arcs, then drone
edges; when all three are integral but no elementary column realizes the
LP value, three separation layers (combined arcs, sortie triples, loop
pairs) take over before the node is declared unseparable.

Search is depth first, one-branch first, with bound pruning against the
incumbent. A quick neighborhood-search pass seeds the incumbent and the
pool before the root is solved.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass

from .core import Instance
from .multigraph import MultiGraph, build_multigraph
from .pricing import FREE, NgSets, PricingContext, Restrictions
from .rmp import (EPS, Column, Master, MasterSolution, column_from_route,
                  extract_arc_values)
from .rmp import _route_features as _ywx_features
from .routes import CoordinatedRoute, feasible_loops, feasible_sorties
from .vns import McwsFailure, VnsConfig, mcws_initial, plan_route, vns_solve

INT_EPS = 1e-6

_KINDS = ("drone_customer", "truck_arc", "drone_edge",
          "combined_arc", "sortie", "loop")


@dataclass(frozen=True)
class BranchDecision:
    kind: str
    key: object
    value: int  # 0 forbids; 1 requires (at least one use)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown branching kind {self.kind!r}")
        if self.value not in (0, 1):
            raise ValueError("branch value must be 0 or 1")


@dataclass
class BpResult:
    status: str  # "optimal" | "time_limit" | "infeasible"
    cost: float
    route: CoordinatedRoute | None
    bb_nodes: int
    root_gap_pct: float
    cg_iterations: int
    columns: int
    wall_time_s: float

    @property
    def stats(self) -> dict:
        return {"status": self.status, "cost": self.cost,
                "bb_nodes": self.bb_nodes, "root_gap_pct": self.root_gap_pct,
                "cg_iterations": self.cg_iterations, "columns": self.columns,
                "wall_time_s": self.wall_time_s}


def restrictions_for(decisions, base: Restrictions = FREE) -> Restrictions:
    """Fold branching decisions into a pricing restriction set."""
    forbid = {k: set(getattr(base, k)) for k in
              ("forbid_drone", "force_drone", "forbid_truck_arc",
               "forbid_combined_arc", "forbid_edge", "forbid_sortie",
               "forbid_loop")}
    require = list(base.require)
    table = {"truck_arc": "forbid_truck_arc",
             "combined_arc": "forbid_combined_arc",
             "drone_edge": "forbid_edge",
             "sortie": "forbid_sortie",
             "loop": "forbid_loop"}
    for d in decisions:
        if d.kind == "drone_customer":
            forbid["force_drone" if d.value else "forbid_drone"].add(d.key)
        elif d.value:
            kind = "edge" if d.kind == "drone_edge" else d.kind
            require.append((kind, d.key))
        else:
            forbid[table[d.kind]].add(d.key)
    return Restrictions(
        forbid_drone=frozenset(forbid["forbid_drone"]),
        force_drone=frozenset(forbid["force_drone"]),
        forbid_truck_arc=frozenset(forbid["forbid_truck_arc"]),
        forbid_combined_arc=frozenset(forbid["forbid_combined_arc"]),
        forbid_edge=frozenset(forbid["forbid_edge"]),
        forbid_sortie=frozenset(forbid["forbid_sortie"]),
        forbid_loop=frozenset(forbid["forbid_loop"]),
        require=tuple(require),
    )


def _column_features(route: CoordinatedRoute):
    """All six branching families of one route: drone customers, truck
    arcs, drone edges, plus combined arcs, sortie triples, loop pairs."""
    y, xt, wd = _ywx_features(route)
    spans = route.sorties
    xc: dict[tuple[int, int, int], int] = {}
    for h, arc in enumerate(route.arcs):
        if not any(l <= h < r for l, _, r in spans):
            k = (arc.i, arc.j, arc.p)
            xc[k] = xc.get(k, 0) + 1
    st: dict[tuple[int, int, int], int] = {}
    for trip in route.sortie_nodes():
        st[trip] = st.get(trip, 0) + 1
    lp: dict[tuple[int, int], int] = {}
    for pair in route.loop_nodes():
        lp[pair] = lp.get(pair, 0) + 1
    return {"drone_customer": y, "truck_arc": xt, "drone_edge": wd,
            "combined_arc": xc, "sortie": st, "loop": lp}


def column_consistent(inst: Instance, col: Column, decisions) -> bool:
    """Whether a pooled column satisfies every branching decision (the
    pricing restrictions it would have been generated under)."""
    if col.route is None:
        return True
    feat = _column_features(col.route)
    for d in decisions:
        if d.kind == "drone_customer":
            drone = feat["drone_customer"].get(d.key, 0)
            if d.value:
                if drone != col.count(d.key):
                    return False  # some visit of the customer is by truck
            elif drone:
                return False
        else:
            used = feat[d.kind].get(d.key, 0)
            if bool(used) != bool(d.value):
                return False
    return True


def _fractional(values: dict, keyorder=None):
    """Most fractional entry as (|v - 0.5|, key), or None."""
    best = None
    for key in sorted(values, key=keyorder) if keyorder else sorted(values):
        v = values[key]
        if abs(v - round(v)) <= INT_EPS:
            continue
        score = abs(v - 0.5)
        if best is None or score < best[0] - 1e-12:
            best = (score, key)
    return best


def select_branch(master: Master, sol: MasterSolution
                  ) -> BranchDecision | None:
    """Hierarchical branching choice on the three primary families; None
    when every aggregate is integral."""
    ys, xs, ws = extract_arc_values(master, sol)
    for kind, vals in (("drone_customer", ys), ("truck_arc", xs),
                       ("drone_edge", ws)):
        hit = _fractional(vals)
        if hit is not None:
            return BranchDecision(kind, hit[1], 1)
    return None


def _fallback_branch(master: Master, sol: MasterSolution
                     ) -> BranchDecision | None:
    agg = {"combined_arc": {}, "sortie": {}, "loop": {}}
    for k, lv in sol.lambdas.items():
        route = master.pool[k].route
        if route is None:
            continue
        feat = _column_features(route)
        for kind in agg:
            for key, cnt in feat[kind].items():
                agg[kind][key] = agg[kind].get(key, 0.0) + lv * cnt
    for kind in ("combined_arc", "sortie", "loop"):
        hit = _fractional(agg[kind])
        if hit is not None:
            return BranchDecision(kind, hit[1], 1)
    return None


def _integral_column(inst: Instance, master: Master, sol: MasterSolution):
    """Cheapest basic elementary column realizing the LP value, if any."""
    n = len(inst.customers)
    cand = []
    for k, lv in sol.lambdas.items():
        if k == 0 or lv <= EPS:
            continue
        col = master.pool[k]
        if (len(col.cover) == n and all(c == 1 for _, c in col.cover)
                and col.cost <= sol.objective + INT_EPS):
            cand.append((col.cost, k))
    if not cand:
        return None
    return master.pool[min(cand)[1]]


class _Deadline:
    def __init__(self, limit: float):
        self.t0 = time.perf_counter()
        self.limit = limit

    def elapsed(self) -> float:
        return time.perf_counter() - self.t0

    def hit(self) -> bool:
        return self.elapsed() >= self.limit


def _solve_node(inst, ctx, pool, decisions, limit, deadline, stats):
    """Column generation to convergence under the node's restrictions.
    Returns (master, solution) or None on deadline."""
    res = restrictions_for(decisions)
    cols = [c for c in pool if column_consistent(inst, c, decisions)]
    master = Master(inst, cols)
    while True:
        sol = master.solve()
        stats["cg_iterations"] += 1
        if deadline.hit():
            return None
        priced = ctx.solve((sol.u0, sol.u), res, limit=limit)
        fresh = [column_from_route(inst, r) for _, r in priced]
        taken, _ = master.add_columns(fresh)
        if taken == 0:
            return master, sol
        for col in master.pool[len(master.pool) - taken:]:
            pool.append(col)
            stats["columns"] += 1


def solve_bp(inst: Instance,
             graph: MultiGraph | None = None,
             ng: NgSets | None = None,
             time_limit: float = 3600.0,
             pricing_limit: int = 40,
             warm_start: bool = True,
             vns_config: VnsConfig | None = None,
             trace: bool = False) -> BpResult:
    deadline = _Deadline(time_limit)
    if graph is None:
        graph = build_multigraph(inst)
    catalog = feasible_sorties(inst)
    loops_catalog = feasible_loops(inst)
    ctx = PricingContext(inst, graph, catalog=catalog,
                         loops_catalog=loops_catalog, ng=ng)

    stats = {"cg_iterations": 0, "columns": 0}
    pool: list[Column] = []
    incumbent_cost = float("inf")
    incumbent_route: CoordinatedRoute | None = None

    if warm_start:
        try:
            tour = plan_route(inst, graph, mcws_initial(inst, graph))
            if tour is not None:
                pool.append(column_from_route(inst, tour))
                stats["columns"] += 1
            cfg = vns_config or VnsConfig(max_iteration=30, max_stopping=12)
            heur = vns_solve(inst, cfg, graph, catalog)
            col = column_from_route(inst, heur.route)
            if not any(c.cover == col.cover and abs(c.cost - col.cost) <= EPS
                       for c in pool):
                pool.append(col)
                stats["columns"] += 1
            incumbent_cost, incumbent_route = heur.cost, heur.route
        except McwsFailure:
            pass

    root_bound = None
    bb_nodes = 0
    status = "optimal"
    stack: list[tuple[tuple[BranchDecision, ...], float]] = [((), 0.0)]
    while stack:
        if deadline.hit():
            status = "time_limit"
            break
        decisions, parent_bound = stack.pop()
        if parent_bound >= incumbent_cost - EPS:
            continue
        solved = _solve_node(inst, ctx, pool, decisions, pricing_limit,
                             deadline, stats)
        if solved is None:
            status = "time_limit"
            break
        master, sol = solved
        bb_nodes += 1
        if root_bound is None:
            root_bound = sol.objective
        if trace:
            print(f"node={bb_nodes} depth={len(decisions)} "
                  f"bound={sol.objective:.3f} incumbent={incumbent_cost:.3f}",
                  file=sys.stderr)
        if sol.artificial_weight > EPS:
            continue  # no column can satisfy these decisions
        if sol.objective >= incumbent_cost - EPS:
            continue
        branch = select_branch(master, sol)
        if branch is None:
            col = _integral_column(inst, master, sol)
            if col is not None:
                if col.cost < incumbent_cost - EPS:
                    incumbent_cost, incumbent_route = col.cost, col.route
                continue
            branch = _fallback_branch(master, sol)
            if branch is None:
                raise RuntimeError(
                    "unable to separate fractional master solution")
        zero = BranchDecision(branch.kind, branch.key, 0)
        stack.append((decisions + (zero,), sol.objective))
        stack.append((decisions + (branch,), sol.objective))

    if incumbent_route is None and status == "optimal":
        status = "infeasible"
    if root_bound is None or incumbent_cost in (0.0, float("inf")):
        gap = 0.0
    else:
        gap = max(0.0, (incumbent_cost - root_bound) / incumbent_cost * 100.0)
    return BpResult(status=status, cost=incumbent_cost,
                    route=incumbent_route, bb_nodes=bb_nodes,
                    root_gap_pct=gap, cg_iterations=stats["cg_iterations"],
                    columns=stats["columns"],
                    wall_time_s=deadline.elapsed())
