"""Arc-based mixed-integer model over the station-expanded multigraph.

The model works on the split-depot node set {start} + customers + {end};
charging stations never appear as nodes, they are folded into the parallel
recharge arcs. Truck movement variables live on the multigraph arcs. Drone
movement variables live on a slightly larger arc set: every multigraph arc
(the drone may ride through a recharge detour) plus a flight-only direct
arc for any ordered pair whose direct arc was eliminated for the truck,
plus one start->end arc so the drone may sit out a truck-only tour. Sortie
selection variables come from the feasible-sortie catalog; the loop variant
adds wait-at-node round-trip variables from the loop catalog.

Timing rows use the modified-cost convention: the truck pays service time
on each arc leaving a customer, and a drone leg leaving the drone's own
customer pays that customer's service (written as a service * yD term so a
leg leaving a launch customer is not charged twice). Loop park durations
and launch/retrieve surcharges never enter the time variables; they are
priced directly in the objective, which is why the optimal objective still
equals the route evaluator's total time.

Battery rows mirror the evaluator: a direct arc needs and drains its full
energy, a recharge arc needs the energy to its first station and resets the
level to the arc's exit value, and sortie/loop energies are deducted from
the departure level at the launch node.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, TextIO

from .core import Instance
from .multigraph import MultiGraph
from .routes import (CoordinatedRoute, RouteEval, Sortie, evaluate_route,
                     feasible_loops, feasible_sorties, loop_energy, loop_time,
                     modified_time, sortie_energy)

END = -1  # model id of the return depot; instances carry a single depot node

BINARY = "binary"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class Var:
    name: str
    kind: str
    lb: float = 0.0
    ub: float = 1.0


@dataclass(frozen=True)
class Row:
    name: str
    terms: tuple[tuple[str, float], ...]
    sense: str  # "<=", ">=", "="
    rhs: float


@dataclass
class LinearModel:
    sense: str = "min"
    variables: list[Var] = field(default_factory=list)
    objective: list[tuple[str, float]] = field(default_factory=list)
    constraints: list[Row] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    big_m: float = 0.0

    def __post_init__(self) -> None:
        self._index = {v.name: v for v in self.variables}

    def add_var(self, name: str, kind: str, lb: float = 0.0,
                ub: float = 1.0) -> str:
        if name in self._index:
            raise ValueError(f"duplicate variable {name}")
        v = Var(name, kind, lb, ub)
        self.variables.append(v)
        self._index[name] = v
        return name

    def add_row(self, name: str, terms: Iterable[tuple[str, float]],
                sense: str, rhs: float) -> None:
        terms = tuple((n, float(c)) for n, c in terms if c != 0.0)
        for n, _ in terms:
            if n not in self._index:
                raise ValueError(f"row {name} references undeclared {n}")
        if sense not in ("<=", ">=", "="):
            raise ValueError(f"bad sense {sense!r}")
        self.constraints.append(Row(name, terms, sense, float(rhs)))

    def var(self, name: str) -> Var:
        return self._index[name]

    def has_var(self, name: str) -> bool:
        return name in self._index


# --- variable naming --------------------------------------------------------

def _nn(i: int) -> str:
    return "end" if i == END else str(i)


def vxT(i: int, j: int, p: int) -> str:
    return f"xT_{_nn(i)}_{_nn(j)}_{p}"


def vxD(i: int, j: int, p: int) -> str:
    return f"xD_{_nn(i)}_{_nn(j)}_{p}"


def vy(i: int, j: int, k: int) -> str:
    return f"y_{_nn(i)}_{j}_{_nn(k)}"


def vz(i: int, j: int) -> str:
    return f"z_{_nn(i)}_{j}"


def vt(i: int) -> str:
    return f"t_{_nn(i)}"


# --- model construction -----------------------------------------------------

def _truck_arcs(inst: Instance, graph: MultiGraph):
    """(i, j_model, p, arc) with the head depot renamed to the end node."""
    out = []
    dep = inst.depot
    for (i, j), bucket in graph.arcs.items():
        jm = END if j == dep else j
        for arc in bucket:
            out.append((i, jm, arc.p, arc))
    out.sort(key=lambda e: (e[0], 10**9 if e[1] == END else e[1], e[2]))
    return out


def _drone_arcs(inst: Instance, graph: MultiGraph, truck_arcs):
    """Truck arc set plus flight-only direct arcs for pairs the truck lost
    to range elimination, plus the start->end idle arc. Cost is flight time
    on direct arcs and the (slower) truck arc time on recharge arcs."""
    dep = inst.depot
    have_direct = {(i, jm) for i, jm, p, _ in truck_arcs if p == 0}
    out = []
    for i, jm, p, arc in truck_arcs:
        if p == 0:
            j = dep if jm == END else jm
            out.append((i, jm, 0, float(inst.c_D[i][j])))
        else:
            out.append((i, jm, p, arc.time))
    nodes_out = (dep,) + inst.customers
    for i in nodes_out:
        for j in inst.customers:
            if i != j and (i, j) not in have_direct:
                out.append((i, j, 0, float(inst.c_D[i][j])))
        if i != dep and (i, END) not in have_direct:
            out.append((i, END, 0, float(inst.c_D[i][dep])))
    out.append((dep, END, 0, 0.0))
    out.sort(key=lambda e: (e[0], 10**9 if e[1] == END else e[1], e[2]))
    return out


def _horizon_big_m(inst: Instance, truck_arcs) -> float:
    p = inst.params
    m = sum(modified_time(inst, arc) for _, _, _, arc in truck_arcs)
    nodes = (inst.depot,) + inst.customers
    for a in nodes:
        for b in nodes:
            if a != b:
                m += float(inst.c_D[a][b])
    m += inst.n_stations * p.charge_time
    m += inst.n_customers * p.service_time
    m += p.truck_capacity
    if p.launch_retrieve:
        m += (inst.n_customers + 1) * (p.launch_time + p.retrieve_time)
    return m


def build_arc_model(inst: Instance, graph: MultiGraph,
                    sorties: dict[tuple[int, int, int], Sortie] | None = None,
                    loops: dict[tuple[int, int], Sortie] | None = None,
                    ) -> LinearModel:
    """Assemble the full arc model; variant rows follow the instance's
    parameter flags. `sorties`/`loops` default to the instance catalogs."""
    p = inst.params
    dep = inst.depot
    cust = inst.customers
    if sorties is None:
        sorties = feasible_sorties(inst)
    if loops is None:
        loops = feasible_loops(inst)
    # catalog keys use the plain depot id for both route ends; split them
    triples = []
    for (i, j, k), s in sorted(sorties.items()):
        triples.append((i, j, END if k == dep else k, s))
    loop_keys = sorted(loops) if p.loops else []

    ta = _truck_arcs(inst, graph)
    da = _drone_arcs(inst, graph, ta)
    model = LinearModel()
    M = _horizon_big_m(inst, ta)
    model.big_m = M

    for i, jm, pp, _ in ta:
        model.add_var(vxT(i, jm, pp), BINARY)
    for i, jm, pp, _ in da:
        model.add_var(vxD(i, jm, pp), BINARY)
    for i, j, k, _ in triples:
        model.add_var(vy(i, j, k), BINARY)
    for i in cust:
        model.add_var(f"yT_{i}", BINARY)
        model.add_var(f"yD_{i}", BINARY)
        model.add_var(f"yC_{i}", BINARY)
    for a, j in loop_keys:
        model.add_var(vz(a, j), BINARY)
    if p.launch_retrieve:
        for i in cust:
            model.add_var(f"l_{i}", BINARY)
    model.add_var(vt(dep), CONTINUOUS, 0.0, 0.0)
    for i in cust:
        model.add_var(vt(i), CONTINUOUS, 0.0, M)
    model.add_var(vt(END), CONTINUOUS, 0.0, M)
    qt = p.truck_capacity
    for i in (dep,) + cust + (END,):
        model.add_var(f"ba1_{_nn(i)}", CONTINUOUS, 0.0, qt)
        model.add_var(f"ba2_{_nn(i)}", CONTINUOUS, 0.0, qt)
        if i != END:
            model.add_var(f"bd_{_nn(i)}", CONTINUOUS, 0.0, qt)

    obj: list[tuple[str, float]] = [(vt(END), 1.0)]
    for a, j in loop_keys:
        coef = loop_time(inst, a, j)
        if p.launch_retrieve:
            coef += p.retrieve_time
            if a != dep:
                coef += p.launch_time
        obj.append((vz(a, j), coef))
    if p.launch_retrieve:
        for i in cust:
            obj.append((f"l_{i}", p.launch_time))
        for i in cust:
            obj.append((f"yD_{i}", p.retrieve_time))
    model.objective = obj

    t_out: dict[int, list] = {}
    t_in: dict[int, list] = {}
    for e in ta:
        t_out.setdefault(e[0], []).append(e)
        t_in.setdefault(e[1], []).append(e)
    d_out: dict[int, list] = {}
    d_in: dict[int, list] = {}
    for e in da:
        d_out.setdefault(e[0], []).append(e)
        d_in.setdefault(e[1], []).append(e)

    for i in cust:
        terms = [(vxT(*e[:3]), 1.0) for e in t_out.get(i, ())]
        terms += [(vxT(*e[:3]), -1.0) for e in t_in.get(i, ())]
        model.add_row(f"tfb_{i}", terms, "=", 0.0)
    for i in cust:
        terms = [(vxT(*e[:3]), 1.0) for e in t_out.get(i, ())]
        terms += [(f"yT_{i}", -1.0), (f"yC_{i}", -1.0)]
        model.add_row(f"tvr_{i}", terms, "=", 0.0)
    model.add_row("tdep", [(vxT(*e[:3]), 1.0) for e in t_out.get(dep, ())],
                  "=", 1.0)
    model.add_row("tend", [(vxT(*e[:3]), 1.0) for e in t_in.get(END, ())],
                  "=", 1.0)
    for i in cust:
        terms = [(vxD(*e[:3]), 1.0) for e in d_out.get(i, ())]
        terms += [(vxD(*e[:3]), -1.0) for e in d_in.get(i, ())]
        model.add_row(f"dfb_{i}", terms, "=", 0.0)
    for i in cust:
        terms = [(vxD(*e[:3]), 1.0) for e in d_out.get(i, ())]
        terms += [(f"yD_{i}", -1.0), (f"yC_{i}", -1.0)]
        model.add_row(f"dvr_{i}", terms, "=", 0.0)
    model.add_row("ddep", [(vxD(*e[:3]), 1.0) for e in d_out.get(dep, ())],
                  "=", 1.0)
    model.add_row("dend", [(vxD(*e[:3]), 1.0) for e in d_in.get(END, ())],
                  "=", 1.0)

    for i in cust:
        terms = [(f"yT_{i}", 1.0), (f"yD_{i}", 1.0), (f"yC_{i}", 1.0)]
        if p.loops:
            terms += [(vz(a, j), 1.0) for a, j in loop_keys if j == i]
        model.add_row(f"part_{i}", terms, "=", 1.0)

    # time propagation; t_i + cost <= t_j + M(1 - x)
    for i, jm, pp, arc in ta:
        name = f"tt_{_nn(i)}_{_nn(jm)}_{pp}"
        model.add_row(name,
                      [(vt(i), 1.0), (vt(jm), -1.0), (vxT(i, jm, pp), M)],
                      "<=", M - modified_time(inst, arc))
    fsv = p.service_time
    for i, jm, pp, cost in da:
        name = f"dt_{_nn(i)}_{_nn(jm)}_{pp}"
        terms = [(vt(i), 1.0), (vt(jm), -1.0), (vxD(i, jm, pp), M)]
        if fsv > 0.0 and i != dep:
            terms.append((f"yD_{i}", fsv))
        model.add_row(name, terms, "<=", M - cost)
    # a drone move between two customers needs a truck presence at one end
    for i, jm, pp, _ in da:
        if i != dep and jm != END:
            model.add_row(f"dna_{_nn(i)}_{_nn(jm)}_{pp}",
                          [(vxD(i, jm, pp), 1.0),
                           (f"yC_{i}", -1.0), (f"yC_{jm}", -1.0)],
                          "<=", 0.0)

    for i, jm, pp, arc in ta:
        model.add_row(f"ten_{_nn(i)}_{_nn(jm)}_{pp}",
                      [(f"ba1_{_nn(jm)}", 1.0), (f"bd_{_nn(i)}", -1.0),
                       (vxT(i, jm, pp), M)],
                      "<=", M - arc.e_req)
        if pp == 0:
            model.add_row(f"tca_{_nn(i)}_{_nn(jm)}_{pp}",
                          [(f"ba2_{_nn(jm)}", 1.0), (f"ba1_{_nn(jm)}", -1.0),
                           (vxT(i, jm, pp), M)],
                          "<=", M)
        else:
            model.add_row(f"trs_{_nn(i)}_{_nn(jm)}_{pp}",
                          [(f"ba2_{_nn(jm)}", 1.0), (vxT(i, jm, pp), M)],
                          "<=", M + arc.e_rem)
    model.add_row("bfull1", [(f"ba1_{_nn(dep)}", 1.0)], "=", qt)
    model.add_row("bfull2", [(f"ba2_{_nn(dep)}", 1.0)], "=", qt)

    # shared battery: sortie and loop energies leave through the truck pack
    for i in (dep,) + cust:
        terms = [(f"bd_{_nn(i)}", 1.0), (f"ba2_{_nn(i)}", -1.0)]
        terms += [(vy(a, j, k), s.e) for a, j, k, s in triples if a == i]
        if p.loops:
            terms += [(vz(a, j), loop_energy(inst, a, j))
                      for a, j in loop_keys if a == i]
        model.add_row(f"se_{_nn(i)}", terms, "<=", 0.0)

    for i in (dep,) + cust:
        terms = [(vy(a, j, k), 1.0) for a, j, k, _ in triples if a == i]
        if not terms:
            continue
        if i == dep:
            model.add_row(f"lrole_{_nn(i)}", terms, "<=", 1.0)
        else:
            terms.append((f"yC_{i}", -1.0))
            model.add_row(f"lrole_{i}", terms, "<=", 0.0)
    for j in cust:
        terms = [(vy(a, jj, k), 1.0) for a, jj, k, _ in triples if jj == j]
        terms.append((f"yD_{j}", -1.0))
        model.add_row(f"serve_{j}", terms, "=", 0.0)
    for k in cust + (END,):
        terms = [(vy(a, j, kk), 1.0) for a, j, kk, _ in triples if kk == k]
        if not terms:
            continue
        if k == END:
            model.add_row(f"rrole_{_nn(k)}", terms, "<=", 1.0)
        else:
            terms.append((f"yC_{k}", -1.0))
            model.add_row(f"rrole_{k}", terms, "<=", 0.0)
    for i, j, k, _ in triples:
        model.add_row(f"legs_{_nn(i)}_{j}_{_nn(k)}",
                      [(vxD(i, j, 0), 1.0), (vxD(j, k, 0), 1.0),
                       (vy(i, j, k), -2.0)],
                      ">=", 0.0)

    if p.loops:
        for a, j in loop_keys:
            if a != dep:
                model.add_row(f"loopc_{a}_{j}",
                              [(vz(a, j), 1.0), (f"yC_{a}", -1.0)],
                              "<=", 0.0)
    if p.drone_eligible is not None:
        allowed = set(p.drone_eligible)
        for i in cust:
            if i not in allowed:
                model.add_row(f"inc_{i}", [(f"yD_{i}", 1.0)], "=", 0.0)
    if p.launch_retrieve:
        for i in cust:
            terms = [(f"l_{i}", -1.0), (f"yD_{i}", 1.0)]
            terms += [(vxD(*e[:3]), -1.0) for e in d_out.get(dep, ())
                      if e[1] == i]
            model.add_row(f"lt_{i}", terms, "<=", 0.0)

    served = {j for _, j, _, _ in triples} | {j for _, j in loop_keys}
    for i in cust:
        if (not t_in.get(i) or not t_out.get(i)) and i not in served:
            model.warnings.append(
                f"customer {i} has no truck arc and no drone option; "
                "model infeasible")
    return model


# --- LP text ---------------------------------------------------------------

_NAME_OK = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_BAD_LEAD = re.compile(r"^[eE][0-9.]")


def _sanitize_names(model: LinearModel) -> tuple[dict[str, str], dict[str, str]]:
    """LP-safe name per variable; second map records only the renames."""
    out: dict[str, str] = {}
    renamed: dict[str, str] = {}
    used: set[str] = set()
    for v in model.variables:
        name = v.name
        safe = re.sub(r"[^A-Za-z0-9_]", "_", name)
        if not safe or safe[0].isdigit() or _BAD_LEAD.match(safe):
            safe = "v_" + safe
        if len(safe) > 255:
            safe = safe[:240]
        base = safe
        k = 2
        while safe in used:
            safe = f"{base}_{k}"
            k += 1
        used.add(safe)
        out[name] = safe
        if safe != name:
            renamed[name] = safe
    return out, renamed


def _num(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _terms_text(terms: Iterable[tuple[str, float]],
                names: dict[str, str]) -> str:
    parts: list[str] = []
    for n, c in terms:
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        body = names[n] if mag == 1.0 else f"{_num(mag)} {names[n]}"
        if not parts and sign == "+":
            parts.append(body)
        else:
            parts.append(f"{sign} {body}")
    return " ".join(parts)


def emit_lp(model: LinearModel, writer: TextIO | None = None) -> str:
    """Deterministic LP text in declaration order; returns the text and
    also writes it when a writer is given."""
    names, renamed = _sanitize_names(model)
    lines = ["\\ arc model export"]
    for orig in sorted(renamed):
        lines.append(f"\\ name map: {renamed[orig]} = {orig}")
    lines.append("Minimize" if model.sense == "min" else "Maximize")
    lines.append(f" obj: {_terms_text(model.objective, names)}".rstrip())
    lines.append("Subject To")
    for row in model.constraints:
        lines.append(f" {row.name}: {_terms_text(row.terms, names)} "
                     f"{row.sense} {_num(row.rhs)}")
    lines.append("Bounds")
    for v in model.variables:
        if v.kind == BINARY:
            continue
        if v.lb == v.ub:
            lines.append(f" {names[v.name]} = {_num(v.lb)}")
        else:
            lines.append(f" {_num(v.lb)} <= {names[v.name]} <= {_num(v.ub)}")
    binaries = [names[v.name] for v in model.variables if v.kind == BINARY]
    if binaries:
        lines.append("Binaries")
        for chunk in range(0, len(binaries), 8):
            lines.append(" " + " ".join(binaries[chunk:chunk + 8]))
    lines.append("End")
    text = "\n".join(lines) + "\n"
    if writer is not None:
        writer.write(text)
    return text


_SENSE = re.compile(r"(<=|>=|=<|=>|=)")


_TOKEN = re.compile(
    r"[A-Za-z_][A-Za-z0-9_]*"
    r"|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
    r"|[+-]")


def _parse_terms(text: str) -> list[tuple[str, float]]:
    terms: list[tuple[str, float]] = []
    sign = 1.0
    coef: float | None = None
    for tok in _TOKEN.findall(text):
        if tok in "+-":
            if coef is not None:
                raise ValueError(f"dangling coefficient in {text!r}")
            if tok == "-":
                sign = -sign
        elif tok[0].isdigit() or tok[0] == ".":
            if coef is not None:
                raise ValueError(f"two coefficients in a row in {text!r}")
            coef = float(tok)
        else:
            terms.append((tok, sign * (1.0 if coef is None else coef)))
            sign, coef = 1.0, None
    if coef is not None:
        raise ValueError(f"trailing coefficient in {text!r}")
    return terms


def parse_lp(text: str) -> LinearModel:
    """Independent reader for the LP dialect emit_lp writes (one row per
    line). Used to round-trip and cross-check emitted files."""
    sense = "min"
    objective: list[tuple[str, float]] = []
    rows: list[tuple[str, list, str, float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    binaries: list[str] = []
    section = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("\\"):
            continue
        low = line.lower()
        if low in ("minimize", "maximize", "min", "max"):
            sense = "min" if low.startswith("min") else "max"
            section = "obj"
            continue
        if low in ("subject to", "st", "s.t.", "such that"):
            section = "rows"
            continue
        if low == "bounds":
            section = "bounds"
            continue
        if low in ("binaries", "binary", "bin"):
            section = "bin"
            continue
        if low in ("generals", "general", "gen", "integers", "integer"):
            section = "gen"
            continue
        if low == "end":
            section = None
            continue
        if section == "obj":
            body = line.split(":", 1)[1] if ":" in line else line
            objective.extend(_parse_terms(body))
        elif section == "rows":
            name, body = (x.strip() for x in line.split(":", 1))
            m = _SENSE.search(body)
            if not m:
                raise ValueError(f"no sense in row {name!r}")
            op = {"=<": "<=", "=>": ">="}.get(m.group(1), m.group(1))
            lhs, rhs = body[:m.start()], body[m.end():]
            rows.append((name, _parse_terms(lhs), op, float(rhs)))
        elif section == "bounds":
            m = _SENSE.findall(line)
            parts = _SENSE.split(line)
            if len(m) == 2:  # lb <= name <= ub
                lb, name, ub = parts[0], parts[2], parts[4]
                bounds[name.strip()] = (float(lb), float(ub))
            elif len(m) == 1:
                a, op, b = parts[0].strip(), m[0], parts[2].strip()
                if op == "=":
                    bounds[a] = (float(b), float(b))
                else:
                    try:
                        val = float(b)
                    except ValueError:  # "0 <= x" form
                        bounds[b] = (float(a), float("inf")) if op == "<=" \
                            else (float("-inf"), float(a))
                    else:
                        cur = bounds.get(a, (0.0, float("inf")))
                        bounds[a] = (cur[0], val) if op == "<=" else (val, cur[1])
            else:
                raise ValueError(f"bad bounds line {line!r}")
        elif section in ("bin", "gen"):
            binaries.extend(line.split())

    model = LinearModel(sense=sense)
    seen: dict[str, None] = {}
    binset = set(binaries)
    for n, _ in objective:
        seen.setdefault(n)
    for _, terms, _, _ in rows:
        for n, _ in terms:
            seen.setdefault(n)
    for n in bounds:
        seen.setdefault(n)
    for n in binaries:
        seen.setdefault(n)
    for n in seen:
        if n in binset:
            model.add_var(n, BINARY)
        else:
            lb, ub = bounds.get(n, (0.0, float("inf")))
            model.add_var(n, CONTINUOUS, lb, ub)
    model.objective = objective
    for name, terms, op, rhs in rows:
        model.add_row(name, terms, op, rhs)
    return model


def models_equal(a: LinearModel, b: LinearModel, tol: float = 0.0) -> bool:
    def canon(m: LinearModel):
        vs = {v.name: (v.kind, v.lb, v.ub) for v in m.variables}
        ob = sorted(m.objective)
        rw = sorted((r.name, tuple(sorted(r.terms)), r.sense, r.rhs)
                    for r in m.constraints)
        return vs, ob, rw

    va, oa, ra = canon(a)
    vb, ob, rb = canon(b)
    if a.sense != b.sense or set(va) != set(vb):
        return False
    for n in va:
        ka, la, ua = va[n]
        kb, lb_, ub = vb[n]
        if ka != kb or abs(la - lb_) > tol or abs(ua - ub) > tol:
            return False
    if len(oa) != len(ob) or len(ra) != len(rb):
        return False
    for (na, ca), (nb, cb) in zip(oa, ob):
        if na != nb or abs(ca - cb) > tol:
            return False
    for (na, ta, sa, ha), (nb, tb, sb, hb) in zip(ra, rb):
        if na != nb or sa != sb or abs(ha - hb) > tol or len(ta) != len(tb):
            return False
        for (n1, c1), (n2, c2) in zip(ta, tb):
            if n1 != n2 or abs(c1 - c2) > tol:
                return False
    return True


# --- assignment bridge ------------------------------------------------------

def objective_value(model: LinearModel, assignment: dict[str, float]) -> float:
    return sum(c * assignment.get(n, 0.0) for n, c in model.objective)


def check_assignment(model: LinearModel, assignment: dict[str, float],
                     tol: float = 1e-6) -> list[str]:
    """Violated rows/bounds (empty list means the point is feasible)."""
    bad: list[str] = []
    for v in model.variables:
        x = assignment.get(v.name, 0.0)
        if x < v.lb - tol or x > v.ub + tol:
            bad.append(f"bound {v.name}={x} not in [{v.lb}, {v.ub}]")
        if v.kind == BINARY and min(abs(x), abs(x - 1.0)) > tol:
            bad.append(f"binary {v.name}={x} not integral")
    for row in model.constraints:
        lhs = sum(c * assignment.get(n, 0.0) for n, c in row.terms)
        if row.sense == "<=" and lhs > row.rhs + tol:
            bad.append(f"{row.name}: {lhs} <= {row.rhs} fails")
        elif row.sense == ">=" and lhs < row.rhs - tol:
            bad.append(f"{row.name}: {lhs} >= {row.rhs} fails")
        elif row.sense == "=" and abs(lhs - row.rhs) > tol:
            bad.append(f"{row.name}: {lhs} = {row.rhs} fails")
    return bad


def route_assignment(inst: Instance, route: CoordinatedRoute,
                     ev: RouteEval | None = None) -> dict[str, float]:
    """Variable values realizing a feasible elementary route. Time values
    strip the loop park delays (the objective re-adds them through the z
    coefficients), battery values track the evaluator's walk."""
    p = inst.params
    dep = inst.depot
    if ev is None:
        ev = evaluate_route(inst, route)
    if not ev.feasible:
        raise ValueError(f"route infeasible: {ev.violation}")
    path = route.truck_path or (dep,)
    last = len(path) - 1
    x: dict[str, float] = {}

    def node_at(pos: int) -> int:
        return END if (pos == last and path[pos] == dep) else path[pos]

    spans = route.sorties
    in_span = [any(l <= h < r for l, _, r in spans) for h in range(len(route.arcs))]
    loop_at: dict[int, float] = {}
    for a, j in route.loops:
        loop_at[a] = loop_at.get(a, 0.0) + loop_time(inst, path[a], j)

    for h, arc in enumerate(route.arcs):
        i, jm = node_at(h), node_at(h + 1)
        x[vxT(i, jm, arc.p)] = 1.0
        if not in_span[h]:
            x[vxD(i, jm, arc.p)] = 1.0
    roles: dict[int, str] = {}
    for pos in range(len(path)):
        u = path[pos]
        if u == dep:
            continue
        inside = any(l < pos < r for l, _, r in spans)
        roles[u] = "yT" if inside else "yC"
    for l, j, r in spans:
        i, k = node_at(l), node_at(r)
        x[vy(i, j, k)] = 1.0
        x[vxD(i, j, 0)] = 1.0
        x[vxD(j, k, 0)] = 1.0
        roles[j] = "yD"
    for a, j in route.loops:
        x[vz(path[a], j)] = 1.0
        roles[j] = "z"
    for u, role in roles.items():
        if role != "z":
            x[f"{role}_{u}"] = 1.0
    if p.launch_retrieve:
        for l, j, r in spans:
            if path[l] != dep:
                x[f"l_{j}"] = 1.0

    # loop-free clock per position
    loop_before = 0.0
    tpos = []
    for pos in range(len(path)):
        tpos.append(ev.arrivals[pos] + ev.waits.get(pos, 0.0) - loop_before)
        loop_before += loop_at.get(pos, 0.0)
    x[vt(dep)] = 0.0
    for pos in range(1, len(path)):
        x[vt(node_at(pos))] = tpos[pos]
    for l, j, r in spans:
        x[vt(j)] = tpos[l] + float(inst.c_D[path[l]][j])
    for a, j in route.loops:
        x[vt(j)] = tpos[a] + float(inst.c_D[path[a]][j])

    qt = p.truck_capacity

    def clip(v: float) -> float:
        return min(qt, max(0.0, v))

    ba1 = qt
    ba2 = qt
    for pos in range(len(path)):
        u = node_at(pos)
        x[f"ba1_{_nn(u)}"] = clip(ba1)
        x[f"ba2_{_nn(u)}"] = clip(ba2)
        if pos < last or u != END:
            x[f"bd_{_nn(u)}"] = clip(ev.energies[pos])
        if pos < len(route.arcs):
            arc = route.arcs[pos]
            ba1 = ev.energies[pos] - arc.e_req
            ba2 = ba1 if arc.p == 0 else arc.e_rem
    for u in inst.customers:
        if u not in roles or roles[u] in ("yD", "z"):
            x[f"ba1_{u}"] = qt
            x[f"ba2_{u}"] = qt
            x[f"bd_{u}"] = qt
    return x


def route_from_assignment(inst: Instance, graph: MultiGraph,
                          assignment: dict[str, float]) -> CoordinatedRoute:
    """Rebuild the coordinated route encoded by an integral assignment."""
    dep = inst.depot
    succ: dict[int, tuple[int, int]] = {}
    for name, val in assignment.items():
        if val < 0.5 or not name.startswith("xT_"):
            continue
        _, si, sj, sp = name.split("_")
        i = dep if si == "end" else int(si)
        j = dep if sj == "end" else int(sj)
        if i in succ:
            raise ValueError(f"truck flow splits at {i}")
        succ[i] = (j, int(sp))
    nodes = [dep]
    ps = []
    while True:
        cur = nodes[-1]
        if cur == dep and len(nodes) > 1:
            break
        if cur not in succ:
            raise ValueError(f"truck path dead-ends at {cur}")
        j, pp = succ.pop(cur)
        nodes.append(j)
        ps.append(pp)
    arcs = tuple(graph.arc(u, v, pp)
                 for (u, v), pp in zip(zip(nodes, nodes[1:]), ps))
    pos_launch = {u: pos for pos, u in enumerate(nodes) if pos < len(nodes) - 1}
    pos_retr = {u: pos for pos, u in enumerate(nodes) if pos > 0}
    pos_retr[nodes[-1]] = len(nodes) - 1
    sorties = []
    loops = []
    for name, val in assignment.items():
        if val < 0.5:
            continue
        if name.startswith("y_"):
            _, si, sj, sk = name.split("_")
            i = dep if si == "end" else int(si)
            k = dep if sk == "end" else int(sk)
            sorties.append((pos_launch[i], int(sj), pos_retr[k]))
        elif name.startswith("z_"):
            _, sa, sj = name.split("_")
            a = dep if sa == "end" else int(sa)
            loops.append((pos_launch[a], int(sj)))
    return CoordinatedRoute(arcs, tuple(sorted(sorties)), tuple(sorted(loops)))
