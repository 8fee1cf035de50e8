"""Coordinated truck-and-drone routes and their exact evaluation.

A route is the truck's arc sequence (multigraph arcs, depot to depot) plus
drone sorties pinned to truck-path POSITIONS (launch position, customer,
retrieve position) and, when enabled, wait-at-node loops. Positions rather
than node ids keep non-elementary routes (from the ng relaxation)
unambiguous.

Battery bookkeeping: the truck starts full; a direct arc drains its energy,
a recharge arc requires its entry energy and then resets the battery to the
arc's exit level; launching a sortie drains the sortie energy at the launch
node; a loop drains its round-trip energy at the anchor. Any dip below zero
or an arc entered with less than its required energy makes the route
infeasible (not a structural error).

Timing: the truck pays arc times (plus per-customer service on the outgoing
arc, mirroring the modified-cost convention used model-wide); at a retrieve
the operation costs max(truck elapsed since launch, drone flight), the gap
recorded as a wait. Launch/retrieve surcharges and loop durations are
objective components; surcharges never enter the timeline, loop durations
do (the truck genuinely parks).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import Instance
from .multigraph import MultiArc, MultiGraph

_EPS = 1e-9


class RouteStructureError(ValueError):
    """Malformed route (bad anchors, broken arc chain); distinct from an
    energy/coverage infeasibility which evaluate_route reports in-band."""


@dataclass(frozen=True)
class Sortie:
    launch: int    # node id; depot means the route's start
    node: int      # customer served by the drone
    retrieve: int  # node id; depot means the route's end
    d: float       # flight + drone-side service time
    e: float       # battery drain, truck-time seconds


@dataclass(frozen=True)
class CoordinatedRoute:
    arcs: tuple[MultiArc, ...]
    sorties: tuple[tuple[int, int, int], ...] = ()  # (launch_pos, customer, retrieve_pos)
    loops: tuple[tuple[int, int], ...] = ()         # (anchor_pos, customer)

    @property
    def truck_path(self) -> tuple[int, ...]:
        if not self.arcs:
            return ()
        return (self.arcs[0].i,) + tuple(a.j for a in self.arcs)

    def sortie_nodes(self) -> tuple[tuple[int, int, int], ...]:
        path = self.truck_path
        return tuple((path[l], j, path[r]) for l, j, r in self.sorties)

    def loop_nodes(self) -> tuple[tuple[int, int], ...]:
        path = self.truck_path
        return tuple((path[a], j) for a, j in self.loops)


@dataclass
class RouteEval:
    total_time: float
    arrivals: tuple[float, ...]      # truck arrival per position (with loop parks)
    energies: tuple[float, ...]      # battery at departure from each position
    waits: dict[int, float]          # retrieve position -> truck wait
    surcharge: float                 # launch/retrieve objective add-ons
    loop_time: float                 # total loop durations
    feasible: bool
    violation: str | None = None
    violation_pos: int | None = None  # truck position of the first violation


# --- drone leg physics -----------------------------------------------------

def leg_energy(inst: Instance, a: int, b: int, payload: float) -> float:
    """Drone energy for one leg. Under the weight-range variant the
    consumption divisor scales linearly from empty_range_factor at zero
    payload down to 1 at full payload."""
    e = float(inst.e_D[a][b])
    if not inst.params.weight_range:
        return e
    f = inst.params.empty_range_factor
    div = f - (f - 1.0) * payload / inst.params.payload_capacity
    return e / div


def sortie_energy(inst: Instance, i: int, j: int, k: int) -> float:
    return leg_energy(inst, i, j, inst.weight_of(j)) + leg_energy(inst, j, k, 0.0)


def sortie_time(inst: Instance, i: int, j: int, k: int) -> float:
    return float(inst.c_D[i][j] + inst.c_D[j][k]) + inst.params.service_time


def loop_energy(inst: Instance, i: int, j: int) -> float:
    return leg_energy(inst, i, j, inst.weight_of(j)) + leg_energy(inst, j, i, 0.0)


def loop_time(inst: Instance, i: int, j: int) -> float:
    return float(inst.c_D[i][j] + inst.c_D[j][i]) + inst.params.service_time


def feasible_sorties(inst: Instance) -> dict[tuple[int, int, int], Sortie]:
    """Catalog of every admissible (launch, customer, retrieve) triple.
    The depot may appear as launch (route start) or retrieve (route end)
    but not both; anchor node equal to the customer, or launch equal to
    retrieve (that would be a loop), are excluded."""
    cap = inst.params.drone_capacity
    out: dict[tuple[int, int, int], Sortie] = {}
    anchors = (inst.depot,) + inst.customers
    for j in inst.customers:
        if not inst.drone_serviceable(j):
            continue
        for i in anchors:
            if i == j:
                continue
            for k in anchors:
                if k == j or k == i:
                    continue
                if i == inst.depot and k == inst.depot:
                    continue
                e = sortie_energy(inst, i, j, k)
                if e <= cap:
                    out[(i, j, k)] = Sortie(i, j, k, sortie_time(inst, i, j, k), e)
    return out


def feasible_loops(inst: Instance) -> dict[tuple[int, int], Sortie]:
    """Wait-at-node round trips (anchor, customer, anchor), loop variant."""
    if not inst.params.loops:
        return {}
    cap = inst.params.drone_capacity
    out: dict[tuple[int, int], Sortie] = {}
    for j in inst.customers:
        if not inst.drone_serviceable(j):
            continue
        for i in (inst.depot,) + inst.customers:
            if i == j:
                continue
            e = loop_energy(inst, i, j)
            if e <= cap:
                out[(i, j)] = Sortie(i, j, i, loop_time(inst, i, j), e)
    return out


def modified_time(inst: Instance, arc: MultiArc) -> float:
    """Arc time plus the tail customer's service time (outgoing convention)."""
    t = arc.time
    if arc.i in inst._customer_set:
        t += inst.params.service_time
    return t


def _validate(inst: Instance, route: CoordinatedRoute) -> None:
    arcs = route.arcs
    if not arcs:
        if route.sorties or route.loops:
            raise RouteStructureError("sorties/loops on an empty route")
        return
    if arcs[0].i != inst.depot or arcs[-1].j != inst.depot:
        raise RouteStructureError("truck path must start and end at the depot")
    for a, b in zip(arcs, arcs[1:]):
        if a.j != b.i:
            raise RouteStructureError(f"broken arc chain at {a.j} -> {b.i}")
        if a.j == inst.depot:
            raise RouteStructureError("depot may not appear mid-route")
    last_pos = len(arcs)
    path = route.truck_path
    prev_r = 0
    for idx, (l, j, r) in enumerate(route.sorties):
        if not (0 <= l < r <= last_pos):
            raise RouteStructureError(f"sortie {idx} anchors out of range")
        if idx > 0 and l < prev_r:
            raise RouteStructureError(f"sortie {idx} overlaps the previous one")
        if j not in inst._customer_set:
            raise RouteStructureError(f"sortie customer {j} is not a customer")
        if path[l] == j or path[r] == j:
            raise RouteStructureError("sortie anchored at its own customer")
        if path[l] == inst.depot and l != 0:
            raise RouteStructureError("launch at the depot only at the route start")
        if path[r] == inst.depot and r != last_pos:
            raise RouteStructureError("depot retrieve only at the route end")
        if l == 0 and r == last_pos:
            raise RouteStructureError("depot-to-depot sortie is prohibited")
        prev_r = r
    if route.loops and not inst.params.loops:
        raise RouteStructureError("loops present but the loop variant is off")
    for a, j in route.loops:
        if not (0 <= a < last_pos):
            raise RouteStructureError("loop anchor out of range (end depot excluded)")
        if j not in inst._customer_set or path[a] == j:
            raise RouteStructureError("bad loop customer")
        for l, _, r in route.sorties:
            if l < a < r:
                raise RouteStructureError("loop anchored inside a sortie span")


def evaluate_route(inst: Instance, route: CoordinatedRoute) -> RouteEval:
    _validate(inst, route)
    cap_t = inst.params.truck_capacity
    cap_d = inst.params.drone_capacity
    p = inst.params
    arcs = route.arcs
    last_pos = len(arcs)

    launches: dict[int, list[tuple[int, int, int]]] = {}
    retrieves: dict[int, tuple[int, int, int]] = {}
    for s in route.sorties:
        launches.setdefault(s[0], []).append(s)
        retrieves[s[2]] = s
    loops_at: dict[int, list[int]] = {}
    for a, j in route.loops:
        loops_at.setdefault(a, []).append(j)

    path = route.truck_path or (inst.depot,)
    t = 0.0
    q = cap_t
    surcharge = 0.0
    total_loop = 0.0
    waits: dict[int, float] = {}
    arrivals = [0.0]
    energies: list[float] = []
    launch_clock: dict[tuple[int, int, int], float] = {}
    feasible = True
    violation = None
    violation_pos = None

    def fail(reason: str) -> None:
        nonlocal feasible, violation, violation_pos
        if feasible:
            feasible, violation, violation_pos = False, reason, pos

    for pos in range(len(path)):
        u = path[pos]
        if pos in retrieves:
            s = retrieves[pos]
            l, j, r = s
            d = sortie_time(inst, path[l], j, path[r])
            tau = t - launch_clock[s]
            wait = max(0.0, d - tau)
            waits[pos] = wait
            t += wait
            if p.launch_retrieve:
                surcharge += p.retrieve_time
        for j in loops_at.get(pos, ()):
            e = loop_energy(inst, u, j)
            if e > cap_d + _EPS:
                fail(f"loop at {u} for {j} exceeds drone capacity")
            dur = loop_time(inst, u, j)
            t += dur
            total_loop += dur
            q -= e
            if q < -_EPS:
                fail(f"battery exhausted by loop at {u}")
            if p.launch_retrieve:
                surcharge += p.retrieve_time
                if pos != 0:
                    surcharge += p.launch_time
        for s in launches.get(pos, ()):
            l, j, r = s
            if p.max_leg is not None and r - l > p.max_leg:
                fail(f"operation for {j} uses {r - l} truck legs (cap {p.max_leg})")
            if not inst.drone_serviceable(j):
                fail(f"customer {j} is not drone-serviceable")
            e = sortie_energy(inst, path[l], j, path[r])
            if e > cap_d + _EPS:
                fail(f"sortie for {j} exceeds drone capacity")
            q -= e
            if q < -_EPS:
                fail(f"battery exhausted launching for {j} at {u}")
            launch_clock[s] = t
            if p.launch_retrieve and pos != 0:
                surcharge += p.launch_time
        energies.append(q)
        if pos < last_pos:
            arc = arcs[pos]
            if q < arc.e_req - _EPS:
                fail(f"arc {arc.i}->{arc.j} (p={arc.p}) needs {arc.e_req:.1f}, have {q:.1f}")
            if arc.p == 0:
                q -= arc.e_req
            else:
                q = arc.e_rem
            if q < -_EPS or q > cap_t + _EPS:
                fail(f"battery out of range after arc {arc.i}->{arc.j}")
            t += modified_time(inst, arc)
            arrivals.append(t)

    return RouteEval(total_time=t + surcharge, arrivals=tuple(arrivals),
                     energies=tuple(energies), waits=waits, surcharge=surcharge,
                     loop_time=total_loop, feasible=feasible,
                     violation=violation, violation_pos=violation_pos)


def check_cover(inst: Instance, route: CoordinatedRoute) -> bool:
    counts = dict.fromkeys(inst.customers, 0)
    for u in route.truck_path:
        if u in counts:
            counts[u] += 1
    for _, j, _ in route.sorties:
        counts[j] += 1
    for _, j in route.loops:
        counts[j] += 1
    return all(c == 1 for c in counts.values())


# --- construction helpers --------------------------------------------------

def pick_arcs(graph: MultiGraph, nodes: list[int] | tuple[int, ...],
              choice: list[int] | None = None) -> tuple[MultiArc, ...]:
    """Arc objects for consecutive node pairs; `choice` gives the p per hop,
    default is the direct arc when present else the fastest recharge arc.
    Raises KeyError when a hop has no arc at all."""
    arcs = []
    for h, (u, v) in enumerate(zip(nodes, nodes[1:])):
        bucket = graph.bucket(u, v)
        if not bucket:
            raise KeyError(f"no arc {u}->{v}")
        if choice is not None:
            arcs.append(graph.arc(u, v, choice[h]))
        else:
            direct = bucket[0] if bucket[0].p == 0 else None
            arcs.append(direct or min(bucket, key=lambda a: a.time))
    return tuple(arcs)


# --- text round trip -------------------------------------------------------

def format_route(inst: Instance, route: CoordinatedRoute,
                 ev: RouteEval | None = None) -> str:
    ev = ev or evaluate_route(inst, route)
    path = route.truck_path or (inst.depot,)
    parts = [str(path[0])]
    for arc in route.arcs:
        parts.append(f"-[{arc.p}]-> {arc.j}")
    lines = ["truck: " + " ".join(parts)]
    for l, j, r in route.sorties:
        lines.append(f"sortie: {path[l]} ~ {j} ~ {path[r]} wait={ev.waits.get(r, 0.0):.6f}")
    for a, j in route.loops:
        lines.append(f"loop: {path[a]} ~ {j}")
    lines.append(f"total={ev.total_time:.6f}")
    return "\n".join(lines) + "\n"


def parse_route(graph: MultiGraph, text: str) -> CoordinatedRoute:
    """Inverse of format_route for elementary routes (node ids resolve to
    unique positions)."""
    inst = graph.inst
    nodes: list[int] = []
    ps: list[int] = []
    sorties_n: list[tuple[int, int, int]] = []
    loops_n: list[tuple[int, int]] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("total="):
            continue
        if line.startswith("truck:"):
            toks = line[len("truck:"):].split()
            nodes = [int(toks[0])]
            i = 1
            while i < len(toks):
                mark = toks[i]
                if not (mark.startswith("-[") and mark.endswith("]->")):
                    raise ValueError(f"bad hop marker '{mark}'")
                ps.append(int(mark[2:-3]))
                nodes.append(int(toks[i + 1]))
                i += 2
        elif line.startswith("sortie:"):
            body = line[len("sortie:"):].split("wait=")[0]
            i, j, k = (int(x.strip()) for x in body.split("~"))
            sorties_n.append((i, j, k))
        elif line.startswith("loop:"):
            a, j = (int(x.strip()) for x in line[len("loop:"):].split("~"))
            loops_n.append((a, j))
        else:
            raise ValueError(f"unrecognized route line '{line}'")
    if not nodes:
        raise ValueError("missing truck line")
    arcs = pick_arcs(graph, nodes, ps)

    def pos_of(node: int, role: str) -> int:
        if node == inst.depot:
            return 0 if role == "launch" else len(nodes) - 1
        hits = [p for p, u in enumerate(nodes) if u == node]
        if len(hits) != 1:
            raise ValueError(f"anchor {node} not unique on the truck path")
        return hits[0]

    sorties = tuple(sorted(
        (pos_of(i, "launch"), j, pos_of(k, "retrieve")) for i, j, k in sorties_n))
    loops = tuple(sorted((pos_of(a, "launch"), j) for a, j in loops_n))
    return CoordinatedRoute(arcs, sorties, loops)
