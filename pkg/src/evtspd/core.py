"""Instance data: parameters, nodes, travel/energy matrices, file round trip.

Unit conventions (used by every other module):
  * coordinates are km, speeds km/h, every time is in seconds
  * energies are expressed in seconds of truck travel time, so the truck
    consumes exactly its arc time and the drone consumes
    energy_ratio * (beeline km) / truck_speed, i.e. energy_ratio *
    speed_ratio * c_D seconds per leg
  * truck distances are Manhattan, drone distances Euclidean

With the defaults below (40/60 km/h, ratio 0.4) a 9000 s truck capacity is a
100 km driving range and a 720 s drone capacity is a 20 km flight range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

DEPOT_KIND = "D"
CUSTOMER_KIND = "C"
STATION_KIND = "S"
_KINDS = (DEPOT_KIND, CUSTOMER_KIND, STATION_KIND)


@dataclass(frozen=True)
class Params:
    """Scalar knobs shared by all solvers. Flags gate the model variants."""

    truck_capacity: float = 9000.0      # battery, seconds of truck travel
    drone_capacity: float = 720.0       # per-sortie energy cap, same unit
    truck_speed: float = 40.0           # km/h
    drone_speed: float = 60.0           # km/h
    speed_ratio: float = 1.5            # drone_speed / truck_speed
    energy_ratio: float = 0.4           # drone energy per km over truck's
    charge_time: float = 120.0          # fixed full-recharge stop, seconds
    service_time: float = 0.0           # per-customer service, seconds
    launch_time: float = 100.0          # surcharge per non-depot launch
    retrieve_time: float = 20.0         # surcharge per sortie
    payload_capacity: float = 6.0       # kg
    ng_size: int = 5
    tol: float = 1e-9
    loops: bool = False
    launch_retrieve: bool = False
    weight_range: bool = False
    empty_range_factor: float = 2.0     # range multiplier at zero payload
    max_leg: int | None = None          # truck arcs per operation, None = off
    drone_eligible: frozenset[int] | None = None  # None = every customer

    def validate(self) -> None:
        if self.truck_speed <= 0 or self.drone_speed <= 0:
            raise ValueError("speeds must be positive")
        if self.truck_capacity <= 0 or self.drone_capacity <= 0:
            raise ValueError("capacities must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.payload_capacity <= 0:
            raise ValueError("payload_capacity must be positive")
        if self.empty_range_factor < 1.0:
            raise ValueError("empty_range_factor must be >= 1")
        if self.max_leg is not None and self.max_leg < 1:
            raise ValueError("max_leg must be >= 1 when set")
        ratio = self.drone_speed / self.truck_speed
        if abs(self.speed_ratio - ratio) > 1e-6 * max(1.0, ratio):
            raise ValueError(
                f"speed_ratio {self.speed_ratio} disagrees with "
                f"drone_speed/truck_speed = {ratio}")


@dataclass(frozen=True)
class Node:
    id: int
    kind: str
    x: float
    y: float
    weight: float | None = None  # parcel kg, customers only


@dataclass
class Instance:
    params: Params
    nodes: list[Node]
    c_T: np.ndarray  # truck travel seconds
    c_D: np.ndarray  # drone travel seconds
    e_T: np.ndarray  # truck energy, == c_T unless matrices were explicit
    e_D: np.ndarray  # drone energy in truck-time seconds
    explicit_truck: bool = False  # c_T came from a ctmat block
    explicit_drone: bool = False

    def __post_init__(self) -> None:
        self.params.validate()
        ids = [nd.id for nd in self.nodes]
        if ids != list(range(len(self.nodes))):
            raise ValueError("node ids must be contiguous from 0")
        depots = [nd.id for nd in self.nodes if nd.kind == DEPOT_KIND]
        if len(depots) != 1:
            raise ValueError(f"expected exactly one depot, got {len(depots)}")
        self.depot: int = depots[0]
        self.customers: tuple[int, ...] = tuple(
            nd.id for nd in self.nodes if nd.kind == CUSTOMER_KIND)
        self.stations: tuple[int, ...] = tuple(
            nd.id for nd in self.nodes if nd.kind == STATION_KIND)
        self._customer_set = frozenset(self.customers)
        n = len(self.nodes)
        for name in ("c_T", "c_D", "e_T", "e_D"):
            m = getattr(self, name)
            if m.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}")
        if self.params.drone_eligible is not None:
            bad = set(self.params.drone_eligible) - set(self.customers)
            if bad:
                raise ValueError(f"drone_eligible contains non-customers {sorted(bad)}")

    @property
    def n_customers(self) -> int:
        return len(self.customers)

    @property
    def n_stations(self) -> int:
        return len(self.stations)

    def weight_of(self, j: int) -> float:
        w = self.nodes[j].weight
        return self.params.payload_capacity if w is None else w

    def drone_serviceable(self, j: int) -> bool:
        elig = self.params.drone_eligible
        return elig is None or j in elig


def compute_matrices(nodes: list[Node], params: Params):
    """Metric travel/energy matrices per the unit conventions above."""
    n = len(nodes)
    xs = np.array([nd.x for nd in nodes])
    ys = np.array([nd.y for nd in nodes])
    dx = np.abs(xs[:, None] - xs[None, :])
    dy = np.abs(ys[:, None] - ys[None, :])
    manhattan = dx + dy
    euclid = np.hypot(xs[:, None] - xs[None, :], ys[:, None] - ys[None, :])
    c_T = manhattan / params.truck_speed * 3600.0
    c_D = euclid / params.drone_speed * 3600.0
    e_T = c_T.copy()
    e_D = params.energy_ratio * euclid / params.truck_speed * 3600.0
    return c_T, c_D, e_T, e_D


def generate_instance(n_customers: int, n_stations: int, seed: int,
                      params: Params | None = None,
                      box: float = 20.0) -> Instance:
    """Random instance: depot at the origin, coordinates uniform on
    [-box, box]^2. The PCG64 stream is consumed customer-first then
    stations, x before y, so instances are reproducible across versions.
    """
    if n_customers < 1:
        raise ValueError("need at least one customer")
    params = params or Params()
    rng = np.random.Generator(np.random.PCG64(seed))
    nodes = [Node(0, DEPOT_KIND, 0.0, 0.0)]
    for i in range(n_customers):
        x = rng.uniform(-box, box)
        y = rng.uniform(-box, box)
        nodes.append(Node(1 + i, CUSTOMER_KIND, x, y))
    for s in range(n_stations):
        x = rng.uniform(-box, box)
        y = rng.uniform(-box, box)
        nodes.append(Node(1 + n_customers + s, STATION_KIND, x, y))
    c_T, c_D, e_T, e_D = compute_matrices(nodes, params)
    return Instance(params, nodes, c_T, c_D, e_T, e_D)


def horizon(inst: Instance) -> float:
    """Loose but safe completion-time bound: every arc once plus every
    recharge, service and drone leg. Used as the MILP big-M and to price
    the master problem's artificial column."""
    n = len(inst.nodes)
    total = float(inst.c_T.sum()) + float(inst.c_D.sum())
    total += inst.n_stations * n * inst.params.charge_time
    total += inst.n_customers * inst.params.service_time
    if inst.params.launch_retrieve:
        total += inst.n_customers * (inst.params.launch_time + inst.params.retrieve_time)
    return total


# ---------------------------------------------------------------------------
# file format
#
#   evtspd 1
#   param <key> <value>          one line per Params field
#   node <id> <D|C|S> <x> <y> [weight]
#   ctmat                        optional, then N*N floats row-major
#   cdmat                        optional, same layout
#
# '#' starts a comment, blank lines are skipped. Booleans serialize as 0/1,
# max_leg 0 means unset, drone_eligible is 'all' or a comma list of ids.
# Explicit ctmat overrides the Manhattan metric (and the truck energy with
# it); explicit cdmat overrides the Euclidean metric and scales the drone
# energy as energy_ratio * speed_ratio * c_D.

_BOOL_KEYS = ("loops", "launch_retrieve", "weight_range")
_FLOAT_KEYS = ("truck_capacity", "drone_capacity", "truck_speed", "drone_speed",
               "speed_ratio", "energy_ratio", "charge_time", "service_time",
               "launch_time", "retrieve_time", "payload_capacity", "tol",
               "empty_range_factor")


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def serialize_instance(inst: Instance) -> str:
    p = inst.params
    out = ["evtspd 1"]
    for key in _FLOAT_KEYS:
        out.append(f"param {key} {_fmt(getattr(p, key))}")
    out.append(f"param ng_size {p.ng_size}")
    for key in _BOOL_KEYS:
        out.append(f"param {key} {1 if getattr(p, key) else 0}")
    out.append(f"param max_leg {0 if p.max_leg is None else p.max_leg}")
    if p.drone_eligible is None:
        out.append("param drone_eligible all")
    else:
        out.append("param drone_eligible " + ",".join(map(str, sorted(p.drone_eligible))))
    for nd in inst.nodes:
        line = f"node {nd.id} {nd.kind} {_fmt(nd.x)} {_fmt(nd.y)}"
        if nd.kind == CUSTOMER_KIND and nd.weight is not None \
                and nd.weight != p.payload_capacity:
            line += f" {_fmt(nd.weight)}"
        out.append(line)
    for flag, name, mat in ((inst.explicit_truck, "ctmat", inst.c_T),
                            (inst.explicit_drone, "cdmat", inst.c_D)):
        if flag:
            out.append(name)
            for row in mat:
                out.append(" ".join(_fmt(v) for v in row))
    return "\n".join(out) + "\n"


class ParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def parse_instance(text: str) -> Instance:
    lines = text.splitlines()
    tokens: list[tuple[int, list[str]]] = []
    for no, raw in enumerate(lines, start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            tokens.append((no, body.split()))
    if not tokens or tokens[0][1] != ["evtspd", "1"]:
        raise ParseError(tokens[0][0] if tokens else 1, "missing 'evtspd 1' header")

    kwargs: dict = {}
    nodes: list[Node] = []
    mats: dict[str, list[float]] = {}
    pos = 1
    while pos < len(tokens):
        no, tok = tokens[pos]
        if tok[0] == "param":
            if len(tok) != 3:
                raise ParseError(no, "param lines take exactly a key and a value")
            key, val = tok[1], tok[2]
            try:
                if key in _FLOAT_KEYS:
                    kwargs[key] = float(val)
                elif key == "ng_size":
                    kwargs[key] = int(val)
                elif key in _BOOL_KEYS:
                    kwargs[key] = bool(int(val))
                elif key == "max_leg":
                    kwargs[key] = None if int(val) == 0 else int(val)
                elif key == "drone_eligible":
                    kwargs[key] = None if val == "all" else \
                        frozenset(int(t) for t in val.split(","))
                else:
                    raise ParseError(no, f"unknown param key '{key}'")
            except ParseError:
                raise
            except ValueError:
                raise ParseError(no, f"bad value '{val}' for param {key}") from None
            pos += 1
        elif tok[0] == "node":
            if len(tok) not in (5, 6):
                raise ParseError(no, "node lines are: node <id> <D|C|S> <x> <y> [weight]")
            try:
                nid = int(tok[1])
                kind = tok[2]
                x, y = float(tok[3]), float(tok[4])
                weight = float(tok[5]) if len(tok) == 6 else None
            except ValueError:
                raise ParseError(no, "bad node line") from None
            if kind not in _KINDS:
                raise ParseError(no, f"unknown node kind '{kind}'")
            if weight is not None and kind != CUSTOMER_KIND:
                raise ParseError(no, "only customers carry a weight")
            if any(nd.id == nid for nd in nodes):
                raise ParseError(no, f"duplicate node id {nid}")
            nodes.append(Node(nid, kind, x, y, weight))
            pos += 1
        elif tok[0] in ("ctmat", "cdmat"):
            name = tok[0]
            if name in mats:
                raise ParseError(no, f"duplicate {name} block")
            if len(tok) != 1:
                raise ParseError(no, f"{name} header takes no values")
            need = len(nodes) * len(nodes)
            if need == 0:
                raise ParseError(no, f"{name} block before any node lines")
            vals: list[float] = []
            pos += 1
            while pos < len(tokens) and len(vals) < need:
                no2, tok2 = tokens[pos]
                if tok2[0] in ("param", "node", "ctmat", "cdmat") and \
                        not _all_floats(tok2):
                    break
                try:
                    vals.extend(float(t) for t in tok2)
                except ValueError:
                    raise ParseError(no2, f"non-numeric value in {name} block") from None
                pos += 1
            if len(vals) != need:
                raise ParseError(no, f"{name} block needs {need} values, got {len(vals)}")
            mats[name] = vals
        else:
            raise ParseError(no, f"unknown directive '{tok[0]}'")

    if not nodes:
        raise ParseError(len(lines), "no node lines")
    nodes.sort(key=lambda nd: nd.id)
    params = Params(**kwargs)
    n = len(nodes)
    c_T, c_D, e_T, e_D = compute_matrices(nodes, params)
    explicit_truck = "ctmat" in mats
    explicit_drone = "cdmat" in mats
    if explicit_truck:
        c_T = np.array(mats["ctmat"]).reshape(n, n)
        e_T = c_T.copy()
    if explicit_drone:
        c_D = np.array(mats["cdmat"]).reshape(n, n)
        e_D = params.energy_ratio * params.speed_ratio * c_D
    return Instance(params, nodes, c_T, c_D, e_T, e_D,
                    explicit_truck=explicit_truck, explicit_drone=explicit_drone)


def _all_floats(tok: list[str]) -> bool:
    try:
        for t in tok:
            float(t)
        return True
    except ValueError:
        return False


def instances_equal(a: Instance, b: Instance, tol: float = 1e-6) -> bool:
    """Round-trip check helper, not a general-purpose __eq__."""
    if a.params != b.params or len(a.nodes) != len(b.nodes):
        return False
    for na, nb in zip(a.nodes, b.nodes):
        if (na.id, na.kind) != (nb.id, nb.kind):
            return False
        if abs(na.x - nb.x) > tol or abs(na.y - nb.y) > tol:
            return False
        if na.kind == CUSTOMER_KIND and abs(a.weight_of(na.id) - b.weight_of(nb.id)) > tol:
            return False
    for name in ("c_T", "c_D", "e_T", "e_D"):
        if not np.allclose(getattr(a, name), getattr(b, name), atol=tol, rtol=1e-9):
            return False
    return True
