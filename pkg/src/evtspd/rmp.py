"""Restricted master problem: the set-partitioning LP over priced routes.

min sum d_r lambda_r  s.t.  sum lambda_r = 1,  sum a_ir lambda_r = 1 per
customer i, lambda >= 0. Solved by a small dense revised simplex: Dantzig
entering with first-index tie-breaking, a Bland fallback after a
degeneracy stall, and a fresh basis factorization each pivot (row counts
are tiny; column counts dominate and those costs are vectorized).

Feasibility machinery, since the priced pool may not cover every customer
yet: big-cost identity artificials bootstrap the first basis and are
barred from re-entering once they leave, and pool slot 0 always holds an
artificial catch-all column covering every customer once at ten times the
horizon bound, so every branch-and-bound node stays feasible and a node
whose LP leans on that column is simply infeasible in the integer sense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Instance, horizon
from .routes import CoordinatedRoute, RouteEval, evaluate_route

EPS = 1e-7
_MAX_PIVOTS = 100_000


@dataclass(frozen=True)
class Column:
    route: CoordinatedRoute | None  # None only for the artificial column
    cost: float
    cover: tuple[tuple[int, int], ...]  # (customer, visit count), sorted

    def count(self, i: int) -> int:
        for c, k in self.cover:
            if c == i:
                return k
        return 0


def column_from_route(inst: Instance, route: CoordinatedRoute,
                      ev: RouteEval | None = None) -> Column:
    ev = ev or evaluate_route(inst, route)
    counts: dict[int, int] = {}
    for u in route.truck_path:
        if u != inst.depot:
            counts[u] = counts.get(u, 0) + 1
    for _, j, _ in route.sorties:
        counts[j] = counts.get(j, 0) + 1
    for _, j in route.loops:
        counts[j] = counts.get(j, 0) + 1
    return Column(route, ev.total_time, tuple(sorted(counts.items())))


@dataclass
class MasterSolution:
    objective: float
    lambdas: dict[int, float]        # pool index -> value (nonzero only)
    u0: float
    u: dict[int, float]              # customer -> dual
    basis: tuple[int, ...]           # variable ids: [0, m) artificials
    artificial_weight: float         # lambda mass on pool slot 0

    def reduced_cost(self, col: Column) -> float:
        return col.cost - self.u0 - sum(k * self.u[c] for c, k in col.cover)


class Master:
    """Column pool plus the LP solver state for one branch-and-bound node."""

    def __init__(self, inst: Instance, columns=None, eps: float = EPS):
        self.inst = inst
        self.eps = eps
        self.horizon = horizon(inst)
        art = Column(None, 10.0 * self.horizon,
                     tuple((i, 1) for i in inst.customers))
        self.pool: list[Column] = [art]
        self._keys: dict[tuple, list[float]] = {art.cover: [art.cost]}
        self.solution: MasterSolution | None = None
        self._basis: list[int] | None = None
        if columns:
            self.add_columns(columns, price_check=False)

    # -- pool maintenance --

    def add_columns(self, cols, price_check: bool = True
                    ) -> tuple[int, list[str]]:
        """Append new columns; duplicates (same cover, cost within eps) are
        dropped, and with a solved LP at hand a column whose reduced cost
        is not negative is refused. Returns (accepted, diagnostics)."""
        taken = 0
        notes: list[str] = []
        sol = self.solution if price_check else None
        for col in cols:
            dup = any(abs(col.cost - c) <= self.eps
                      for c in self._keys.get(col.cover, ()))
            if dup:
                notes.append(f"duplicate column cost={col.cost:.6f} dropped")
                continue
            if sol is not None:
                rc = sol.reduced_cost(col)
                if rc >= -self.eps:
                    notes.append(
                        f"column cost={col.cost:.6f} reduced cost {rc:.3e} "
                        "not negative; refused")
                    continue
            self.pool.append(col)
            self._keys.setdefault(col.cover, []).append(col.cost)
            taken += 1
        return taken, notes

    # -- LP --

    def solve(self) -> MasterSolution:
        inst = self.inst
        cust = inst.customers
        m = len(cust) + 1
        n = len(self.pool)
        big = 100.0 * self.horizon
        row_of = {c: 1 + ix for ix, c in enumerate(cust)}

        A = np.zeros((m, m + n))
        A[:, :m] = np.eye(m)
        c = np.empty(m + n)
        c[:m] = big
        for k, col in enumerate(self.pool):
            A[0, m + k] = 1.0
            for cu, cnt in col.cover:
                A[row_of[cu], m + k] = cnt
            c[m + k] = col.cost
        b = np.ones(m)

        basis = None
        if self._basis is not None and all(v < m + n for v in self._basis):
            basis = list(self._basis)
            B = A[:, basis]
            if abs(np.linalg.det(B)) < 1e-12:
                basis = None
        if basis is None:
            basis = list(range(m))

        eps = self.eps
        bland = False
        stall = 0
        last_obj = np.inf
        for _ in range(_MAX_PIVOTS):
            B_inv = np.linalg.inv(A[:, basis])
            x_b = B_inv @ b
            y = c[basis] @ B_inv
            d = c - y @ A
            d[basis] = 0.0
            d[:m] = np.inf  # artificials never re-enter
            if bland:
                cand = np.flatnonzero(d < -eps)
                if cand.size == 0:
                    break
                e = int(cand[0])
            else:
                e = int(np.argmin(d))
                if d[e] >= -eps:
                    break
            w = B_inv @ A[:, e]
            rows = np.flatnonzero(w > eps)
            if rows.size == 0:
                raise RuntimeError("master LP unbounded (costs corrupt)")
            theta = x_b[rows] / w[rows]
            tmin = float(theta.min())
            ties = rows[theta <= tmin + 1e-12]
            r = min(ties, key=lambda rr: (0 if basis[rr] < m else 1, basis[rr]))
            basis[r] = e
            obj = float(c[basis] @ np.linalg.solve(A[:, basis], b))
            if obj < last_obj - eps:
                stall = 0
                last_obj = obj
            else:
                stall += 1
                if stall > 40 + 2 * m:
                    bland = True
        else:
            raise RuntimeError("master simplex failed to converge")

        B_inv = np.linalg.inv(A[:, basis])
        x_b = B_inv @ b
        y = c[basis] @ B_inv
        for r, v in enumerate(basis):
            if v < m and x_b[r] > eps:
                raise RuntimeError("master LP infeasible despite artificials")
        lambdas: dict[int, float] = {}
        for r, v in enumerate(basis):
            if v >= m and x_b[r] > eps:
                lambdas[v - m] = float(x_b[r])
        objective = float(sum(self.pool[k].cost * lv
                              for k, lv in lambdas.items()))
        self._basis = list(basis)
        self.solution = MasterSolution(
            objective=objective,
            lambdas=lambdas,
            u0=float(y[0]),
            u={cu: float(y[row_of[cu]]) for cu in cust},
            basis=tuple(basis),
            artificial_weight=lambdas.get(0, 0.0),
        )
        return self.solution

    # -- debug dump --

    def to_model(self):
        from .milp import CONTINUOUS, LinearModel
        model = LinearModel()
        for k, col in enumerate(self.pool):
            model.add_var(f"lam_{k}", CONTINUOUS, 0.0, float("inf"))
        model.objective = [(f"lam_{k}", col.cost)
                           for k, col in enumerate(self.pool)]
        model.add_row("convexity",
                      [(f"lam_{k}", 1.0) for k in range(len(self.pool))],
                      "=", 1.0)
        for cu in self.inst.customers:
            model.add_row(f"visit_{cu}",
                          [(f"lam_{k}", float(col.count(cu)))
                           for k, col in enumerate(self.pool)
                           if col.count(cu)],
                          "=", 1.0)
        return model


def solve_lp(inst: Instance, columns) -> MasterSolution:
    return Master(inst, columns).solve()


def add_columns(master: Master, cols) -> tuple[int, list[str]]:
    return master.add_columns(cols)


# --- fractional aggregates for branching ------------------------------------

def _route_features(route: CoordinatedRoute):
    """(drone-alone customer counts, truck-only arc counts, drone edge
    counts) of one route; arcs keyed (i, j, p) by node id, edges
    undirected."""
    y: dict[int, int] = {}
    x: dict[tuple[int, int, int], int] = {}
    w: dict[tuple[int, int], int] = {}
    path = route.truck_path
    spans = route.sorties
    for h, arc in enumerate(route.arcs):
        if any(l <= h < r for l, _, r in spans):
            k = (arc.i, arc.j, arc.p)
            x[k] = x.get(k, 0) + 1
    for l, j, r in spans:
        y[j] = y.get(j, 0) + 1
        for a, bnode in ((path[l], j), (j, path[r])):
            e = (min(a, bnode), max(a, bnode))
            w[e] = w.get(e, 0) + 1
    for _, j in route.loops:
        y[j] = y.get(j, 0) + 1
    return y, x, w


def extract_arc_values(master: Master, sol: MasterSolution | None = None):
    """lambda-weighted (y*_i, x*T_ijp, w*D_ij) aggregates of the current
    LP point; the branching hierarchy scans these for fractionality."""
    sol = sol or master.solution
    if sol is None:
        raise ValueError("master not solved")
    ys: dict[int, float] = {}
    xs: dict[tuple[int, int, int], float] = {}
    ws: dict[tuple[int, int], float] = {}
    for k, lv in sol.lambdas.items():
        route = master.pool[k].route
        if route is None:
            continue
        y, x, w = _route_features(route)
        for key, cnt in y.items():
            ys[key] = ys.get(key, 0.0) + lv * cnt
        for key, cnt in x.items():
            xs[key] = xs.get(key, 0.0) + lv * cnt
        for key, cnt in w.items():
            ws[key] = ws.get(key, 0.0) + lv * cnt
    return ys, xs, ws
