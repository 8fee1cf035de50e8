"""Minimum-reduced-cost route search: forward labeling over the multigraph.

States follow the coordinated-route structure: a label sits either in a
combined configuration (truck and drone together, last node i_C = i_T) or
mid-operation (drone away since i_C, truck at i_T, elapsed op time tau).
The battery pair (b_C, b_T) defers the sortie energy to the closing step:
b_C tracks the launch-point headroom (frozen once a recharge arc resets
the pack), b_T the arc-by-arc level; a closing drone leg needs its energy
within b_C and, when no recharge intervened, pays it from b_T.

Neighborhood memory makes routes ng-relaxed rather than elementary: each
move adds the node being left behind and intersects with the arrival
node's ng-set, so a customer may be revisited once it falls out of
memory. Service closures that stay put (drone leg, loop) intersect with
the resident truck node's set, keeping memory anchored where the label
actually sits.

Dominance is bucketed by (k, i_C, i_T, recharge flag, branching
obligations, leg count): combined labels compare (value, ng, b_C, b_T);
mid-operation labels additionally need value + tau to win, since a slow
truck can still be overtaken by a long drone flight. A census mode
disables dominance and parent tracking and aggregates complete routes to
(cost, visit-count) pairs; that is the exhaustive, dual-independent
cross-check the dominance tests build on.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import NamedTuple

from .core import Instance
from .multigraph import MultiArc, MultiGraph
from .routes import (CoordinatedRoute, Sortie, feasible_loops,
                     feasible_sorties, modified_time)

EPS = 1e-7


class NgSets(NamedTuple):
    delta: int
    sets: dict[int, frozenset[int]]


def build_ng_sets(inst: Instance, delta: int) -> NgSets:
    """Per-customer memory sets: the customer itself plus its delta-1
    nearest customers by truck time, distance ties to the smaller id."""
    if delta < 1:
        raise ValueError("ng-set size must be at least 1")
    sets = {}
    for i in inst.customers:
        near = sorted((float(inst.c_T[i][j]), j)
                      for j in inst.customers if j != i)
        sets[i] = frozenset(j for _, j in near[:delta - 1]) | {i}
    return NgSets(delta, sets)


@dataclass(frozen=True)
class Restrictions:
    """Branching state handed to the search. Forbid-sets filter actions;
    `require` lists features a complete route must contain at least once
    (satisfied bits ride in the label and split the dominance buckets)."""
    forbid_drone: frozenset = frozenset()    # customers never served drone-alone
    force_drone: frozenset = frozenset()     # customers never visited by truck
    forbid_truck_arc: frozenset = frozenset()     # (i, j, p) mid-operation
    forbid_combined_arc: frozenset = frozenset()  # (i, j, p) together
    forbid_edge: frozenset = frozenset()          # sorted (a, b) drone legs
    forbid_sortie: frozenset = frozenset()        # (launch, j, retrieve)
    forbid_loop: frozenset = frozenset()          # (anchor, j)
    require: tuple = ()   # (("truck_arc", key) | ("combined_arc", key)
    #                        | ("edge", key) | ("sortie", key) | ("loop", key))


FREE = Restrictions()


class Label(NamedTuple):
    value: float   # reduced cost accumulated so far
    ng: int        # memory bitmask over customers
    k: int         # customers served (with multiplicity)
    iC: int        # last combined node
    iT: int        # last truck node
    tau: float     # truck time since iC (0 when combined)
    bC: float      # launch-point energy headroom
    bT: float      # truck battery at iT
    fixed: bool    # a recharge arc reset the pack since iC
    sat: int       # satisfied branching-requirement bits
    nT: int        # truck arcs in the open operation (leg-cap variant)
    counts: int    # packed per-customer visit counts (5 bits each)


def edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a <= b else (b, a)


def arc_entry(inst: Instance, arc: MultiArc):
    """Adjacency tuple the extension steps consume."""
    return (arc.j, arc.p, modified_time(inst, arc), arc.e_req, arc.e_rem)


class _Rules:
    """Per-solve bundle: duals folded per customer, restriction sets,
    requirement bit maps, and objective surcharges."""

    __slots__ = ("u0", "du", "R", "bits", "full_sat", "sl", "sr", "maxleg")

    def __init__(self, inst: Instance, duals, restrictions: Restrictions | None):
        p = inst.params
        u0, u = duals if duals is not None else (0.0, {})
        self.u0 = float(u0)
        self.du = {j: float(u.get(j, 0.0)) for j in inst.customers}
        self.du[inst.depot] = 0.0
        self.R = restrictions or FREE
        self.bits = {req: 1 << ix for ix, req in enumerate(self.R.require)}
        self.full_sat = (1 << len(self.R.require)) - 1
        self.sl = p.launch_time if p.launch_retrieve else 0.0
        self.sr = p.retrieve_time if p.launch_retrieve else 0.0
        self.maxleg = p.max_leg

    def req_bit(self, kind: str, key) -> int:
        return self.bits.get((kind, key), 0)


class PricingContext:
    """Instance-level precomputation shared across pricing calls: arc
    adjacency with modified times, sortie and loop catalogs grouped by
    their anchors, ng bitmasks."""

    def __init__(self, inst: Instance, graph: MultiGraph,
                 catalog: dict[tuple[int, int, int], Sortie] | None = None,
                 loops_catalog: dict[tuple[int, int], Sortie] | None = None,
                 ng: NgSets | None = None):
        self.inst = inst
        self.graph = graph
        self.catalog = feasible_sorties(inst) if catalog is None else catalog
        self.loops_catalog = (feasible_loops(inst) if loops_catalog is None
                              else loops_catalog)
        self.ng = build_ng_sets(inst, inst.params.ng_size) if ng is None else ng
        dep = inst.depot
        cust = inst.customers
        self.bit = {c: ix for ix, c in enumerate(cust)}
        self.node_bit = {c: 1 << ix for ix, c in enumerate(cust)}
        self.node_bit[dep] = 0
        self.cshift = {c: 5 * ix for ix, c in enumerate(cust)}
        self.full_mask = (1 << len(cust)) - 1
        self.ng_mask = {i: sum(self.node_bit[j] for j in self.ng.sets[i])
                        for i in cust}
        self.ng_mask[dep] = self.full_mask
        # adjacency: (head, p, modified time, entry energy, exit level)
        to_cust: dict[int, list] = {}
        to_dep: dict[int, list] = {}
        for (i, j), bucket in sorted(graph.arcs.items()):
            for arc in bucket:
                side = to_dep if j == dep else to_cust
                side.setdefault(i, []).append(arc_entry(inst, arc))
        self.to_cust = {i: tuple(v) for i, v in to_cust.items()}
        self.to_dep = {i: tuple(v) for i, v in to_dep.items()}
        close_here: dict[tuple[int, int], list] = {}
        close_dep: dict[int, list] = {}
        for (i, j, k), s in sorted(self.catalog.items()):
            if k == dep:
                close_dep.setdefault(i, []).append((j, s.d, s.e))
            else:
                close_here.setdefault((i, k), []).append((j, s.d, s.e))
        self.close_here = {key: tuple(v) for key, v in close_here.items()}
        self.close_dep = {key: tuple(v) for key, v in close_dep.items()}
        loops_at: dict[int, list] = {}
        for (i, j), s in sorted(self.loops_catalog.items()):
            loops_at.setdefault(i, []).append((j, s.d, s.e))
        self.loops_at = {key: tuple(v) for key, v in loops_at.items()}

    # -- single-step extensions (the engine and the tests share these) --

    def _revisit_blocked(self, lab: Label, j: int) -> bool:
        return bool(self.node_bit[j] & lab.ng) or j == lab.iT or j == lab.iC

    def extend_truck_arc(self, rules: _Rules, lab: Label, entry) -> Label | None:
        """Truck moves alone to a customer; from a combined state this is
        the launch moment of a new operation."""
        j, pp, mt, ereq, erem = entry
        if self._revisit_blocked(lab, j) or j in rules.R.force_drone:
            return None
        if (lab.iT, j, pp) in rules.R.forbid_truck_arc:
            return None
        if lab.bT < ereq - EPS:
            return None
        nT = lab.nT + 1 if rules.maxleg is not None else 0
        if rules.maxleg is not None and nT > rules.maxleg:
            return None
        value = lab.value - rules.du[j]
        if lab.iC == lab.iT and lab.iT != self.inst.depot:
            value += rules.sl
        return Label(
            value=value,
            ng=(lab.ng | self.node_bit[lab.iT]) & self.ng_mask[j],
            k=lab.k + 1, iC=lab.iC, iT=j,
            tau=lab.tau + mt,
            bC=lab.bC if lab.fixed else lab.bC - ereq,
            bT=lab.bT - ereq if pp == 0 else erem,
            fixed=lab.fixed or pp != 0,
            sat=lab.sat | rules.req_bit("truck_arc", (lab.iT, j, pp)),
            nT=nT,
            counts=lab.counts + (1 << self.cshift[j]))

    def extend_combined_arc(self, rules: _Rules, lab: Label, entry) -> Label | None:
        """Truck and drone ride together to a customer; arc time enters
        the value immediately."""
        if lab.iC != lab.iT or lab.tau != 0.0:
            return None
        j, pp, mt, ereq, erem = entry
        if self._revisit_blocked(lab, j) or j in rules.R.force_drone:
            return None
        if (lab.iT, j, pp) in rules.R.forbid_combined_arc:
            return None
        if lab.bT < ereq - EPS:
            return None
        bT = lab.bT - ereq if pp == 0 else erem
        return Label(
            value=lab.value + mt - rules.du[j],
            ng=(lab.ng | self.node_bit[lab.iT]) & self.ng_mask[j],
            k=lab.k + 1, iC=j, iT=j,
            tau=0.0, bC=bT, bT=bT, fixed=False,
            sat=lab.sat | rules.req_bit("combined_arc", (lab.iT, j, pp)),
            nT=0,
            counts=lab.counts + (1 << self.cshift[j]))

    def extend_drone_leg(self, rules: _Rules, lab: Label, item) -> Label | None:
        """Close the open operation: the drone served j on its own and is
        retrieved at the truck's node; the slower side prices the op."""
        if lab.iC == lab.iT:
            return None
        j, d, e = item
        if self._revisit_blocked(lab, j) or j in rules.R.forbid_drone:
            return None
        if (lab.iC, j, lab.iT) in rules.R.forbid_sortie:
            return None
        R = rules.R
        if R.forbid_edge and (edge_key(lab.iC, j) in R.forbid_edge
                              or edge_key(j, lab.iT) in R.forbid_edge):
            return None
        if e > lab.bC + EPS:
            return None
        bT = lab.bT if lab.fixed else lab.bT - e
        sat = lab.sat | rules.req_bit("sortie", (lab.iC, j, lab.iT)) \
            | rules.req_bit("edge", edge_key(lab.iC, j)) \
            | rules.req_bit("edge", edge_key(j, lab.iT))
        return Label(
            value=lab.value + max(lab.tau, d) - rules.du[j] + rules.sr,
            ng=(lab.ng | self.node_bit[lab.iC] | self.node_bit[lab.iT])
            & self.ng_mask[lab.iT],
            k=lab.k + 1, iC=lab.iT, iT=lab.iT,
            tau=0.0, bC=bT, bT=bT, fixed=False,
            sat=sat, nT=0,
            counts=lab.counts + (1 << self.cshift[j]))

    def extend_loop(self, rules: _Rules, lab: Label, item) -> Label | None:
        """Wait-in-place round trip serving j from the current combined
        node."""
        if lab.iC != lab.iT or lab.tau != 0.0 or lab.fixed:
            return None
        j, dur, e = item
        if self._revisit_blocked(lab, j) or j in rules.R.forbid_drone:
            return None
        if (lab.iT, j) in rules.R.forbid_loop:
            return None
        if e > lab.bC + EPS:
            return None
        bT = lab.bT - e
        value = lab.value + dur - rules.du[j] + rules.sr
        if lab.iT != self.inst.depot:
            value += rules.sl
        return Label(
            value=value,
            ng=(lab.ng | self.node_bit[lab.iT]) & self.ng_mask[lab.iT],
            k=lab.k + 1, iC=lab.iT, iT=lab.iT,
            tau=0.0, bC=bT, bT=bT, fixed=False,
            sat=lab.sat | rules.req_bit("loop", (lab.iT, j)),
            nT=0,
            counts=lab.counts + (1 << self.cshift[j]))

    def initial_label(self, u0: float = 0.0) -> Label:
        dep = self.inst.depot
        q = self.inst.params.truck_capacity
        return Label(value=-u0, ng=0, k=0, iC=dep, iT=dep, tau=0.0,
                     bC=q, bT=q, fixed=False, sat=0, nT=0, counts=0)

    # -- full search --

    def solve(self, duals=None, restrictions: Restrictions | None = None,
              limit: int = 40, *, dominance: bool = True,
              trace: bool = False):
        """Up to `limit` ng-routes with reduced cost < -EPS, best first,
        as (reduced cost, CoordinatedRoute) pairs."""
        terms, arena = self._run(duals, restrictions, dominance=dominance,
                                 trace=trace, census=False)
        results = []
        for value, _, aidx, act in sorted(terms, key=lambda t: (t[0], t[1])):
            if value >= -EPS or len(results) >= limit:
                break
            results.append((value, self._reconstruct(arena, aidx, act)))
        return results

    def route_space(self, restrictions: Restrictions | None = None,
                    trace: bool = False) -> list[tuple[float, dict[int, int]]]:
        """Dominance-free census of every complete ng-route, aggregated to
        (min cost, visit counts); the best reduced cost under duals
        (u0, u) is then min over pairs of cost - u0 - sum counts_i u_i.
        Dual-independent by construction."""
        terms, _ = self._run(None, restrictions, dominance=False, trace=trace,
                             census=True)
        out = []
        for counts, value in sorted(terms.items()):
            cov = {c: (counts >> self.cshift[c]) & 31
                   for c in self.inst.customers
                   if (counts >> self.cshift[c]) & 31}
            out.append((value, cov))
        out.sort(key=lambda t: t[0])
        return out

    def _run(self, duals, restrictions, *, dominance: bool, trace: bool,
             census: bool):
        inst = self.inst
        dep = inst.depot
        n = inst.n_customers
        rules = _Rules(inst, duals, restrictions)
        full_sat = rules.full_sat

        init = self.initial_label(rules.u0)
        # arena rows: (parent index, action); row 0 is the root
        arena: list[tuple[int, tuple | None]] = [(-1, None)]
        if census:
            # key drops the leading value field, value dict holds the min
            level: dict = {init[1:]: init.value}
            terms_census: dict[int, float] = {}
            terms: list = []
        else:
            level = {(dep, dep, False, 0, 0): [(init, 0)]}
            terms = []
        seq = 0
        pruned = 0

        if trace:
            print("k=0 labels=1 pruned=0", file=sys.stderr)

        for k in range(n + 1):
            nxt: dict = {}
            pruned = 0

            def keep(lab: Label, parent: int, act: tuple) -> None:
                nonlocal pruned
                if census:
                    key = lab[1:]
                    old = nxt.get(key)
                    if old is None:
                        nxt[key] = lab.value
                    else:
                        pruned += 1
                        if lab.value < old:
                            nxt[key] = lab.value
                    return
                bkey = (lab.iC, lab.iT, lab.fixed, lab.sat, lab.nT)
                bucket = nxt.setdefault(bkey, [])
                if dominance:
                    combined = lab.iC == lab.iT
                    vt = lab.value + lab.tau
                    for other, _ in bucket:
                        if (other.value <= lab.value + EPS
                                and (other.ng & lab.ng) == other.ng
                                and other.bC >= lab.bC - EPS
                                and other.bT >= lab.bT - EPS
                                and (combined
                                     or other.value + other.tau <= vt + EPS)):
                            pruned += 1
                            return
                    survivors = []
                    for pair in bucket:
                        other = pair[0]
                        if (lab.value <= other.value + EPS
                                and (lab.ng & other.ng) == lab.ng
                                and lab.bC >= other.bC - EPS
                                and lab.bT >= other.bT - EPS
                                and (combined
                                     or vt <= other.value + other.tau + EPS)):
                            pruned += 1
                        else:
                            survivors.append(pair)
                    if len(survivors) != len(bucket):
                        bucket[:] = survivors
                arena.append((parent, act))
                bucket.append((lab, len(arena) - 1))

            def close(value: float, parent: int, act: tuple, counts: int,
                      sat: int) -> None:
                nonlocal seq
                if sat != full_sat:
                    return
                if census:
                    old = terms_census.get(counts)
                    if old is None or value < old:
                        terms_census[counts] = value
                else:
                    seq += 1
                    terms.append((value, seq, parent, act))

            if census:
                items = [(Label(value, *key), 0)
                         for key, value in level.items()]
            else:
                items = [pair for bucket in level.values() for pair in bucket]

            for lab, aidx in items:
                combined = lab.iC == lab.iT
                if k == n:
                    if not combined:
                        continue
                    for entry in self.to_dep.get(lab.iT, ()):
                        _, pp, mt, ereq, _ = entry
                        if lab.bT < ereq - EPS:
                            continue
                        if (lab.iT, dep, pp) in rules.R.forbid_combined_arc:
                            continue
                        sat = lab.sat | rules.req_bit("combined_arc",
                                                      (lab.iT, dep, pp))
                        close(lab.value + mt, aidx, ("F", lab.iT, pp),
                              lab.counts, sat)
                    continue
                if combined:
                    for entry in self.to_cust.get(lab.iT, ()):
                        new = self.extend_combined_arc(rules, lab, entry)
                        if new is not None:
                            keep(new, aidx, ("C", lab.iT, entry[0], entry[1]))
                        new = self.extend_truck_arc(rules, lab, entry)
                        if new is not None:
                            keep(new, aidx, ("T", lab.iT, entry[0], entry[1]))
                    for item in self.loops_at.get(lab.iT, ()):
                        new = self.extend_loop(rules, lab, item)
                        if new is not None:
                            keep(new, aidx, ("L", item[0]))
                else:
                    for entry in self.to_cust.get(lab.iT, ()):
                        new = self.extend_truck_arc(rules, lab, entry)
                        if new is not None:
                            keep(new, aidx, ("T", lab.iT, entry[0], entry[1]))
                    for item in self.close_here.get((lab.iC, lab.iT), ()):
                        new = self.extend_drone_leg(rules, lab, item)
                        if new is not None:
                            keep(new, aidx, ("D", item[0]))
                    if k == n - 1:
                        self._close_at_depot(rules, lab, aidx, close)
            level = nxt
            if trace and k < n:
                count = (len(level) if census
                         else sum(len(b) for b in level.values()))
                print(f"k={k + 1} labels={count} pruned={pruned}",
                      file=sys.stderr)

        if census:
            return terms_census, arena
        return terms, arena

    def _close_at_depot(self, rules: _Rules, lab: Label, aidx: int,
                        close) -> None:
        """Retrieve at the route's end: truck arc home plus the closing
        drone leg, fused into one terminal step."""
        dep = self.inst.depot
        for entry in self.to_dep.get(lab.iT, ()):
            _, pp, mt, ereq, erem = entry
            if lab.bT < ereq - EPS:
                continue
            if (lab.iT, dep, pp) in rules.R.forbid_truck_arc:
                continue
            if rules.maxleg is not None and lab.nT + 1 > rules.maxleg:
                continue
            bC = lab.bC if lab.fixed else lab.bC - ereq
            tau = lab.tau + mt
            sat0 = lab.sat | rules.req_bit("truck_arc", (lab.iT, dep, pp))
            for j, d, e in self.close_dep.get(lab.iC, ()):
                if self.node_bit[j] & lab.ng or j == lab.iC or j == lab.iT \
                        or j in rules.R.forbid_drone:
                    continue
                if (lab.iC, j, dep) in rules.R.forbid_sortie:
                    continue
                R = rules.R
                if R.forbid_edge and (edge_key(lab.iC, j) in R.forbid_edge
                                      or edge_key(j, dep) in R.forbid_edge):
                    continue
                if e > bC + EPS:
                    continue
                sat = sat0 | rules.req_bit("sortie", (lab.iC, j, dep)) \
                    | rules.req_bit("edge", edge_key(lab.iC, j)) \
                    | rules.req_bit("edge", edge_key(j, dep))
                close(lab.value + max(tau, d) - rules.du[j] + rules.sr,
                      aidx, ("X", lab.iT, pp, j),
                      lab.counts + (1 << self.cshift[j]), sat)

    def _reconstruct(self, arena, aidx: int,
                     final_act: tuple) -> CoordinatedRoute:
        graph = self.graph
        dep = self.inst.depot
        acts = []
        a = aidx
        while a > 0:
            parent, act = arena[a]
            acts.append(act)
            a = parent
        acts.reverse()
        acts.append(final_act)
        pos = 0
        arcs = []
        sorties = []
        loops = []
        launch = None
        for act in acts:
            tag = act[0]
            if tag == "C":
                arcs.append(graph.arc(act[1], act[2], act[3]))
                pos += 1
            elif tag == "T":
                if launch is None:
                    launch = pos
                arcs.append(graph.arc(act[1], act[2], act[3]))
                pos += 1
            elif tag == "D":
                sorties.append((launch, act[1], pos))
                launch = None
            elif tag == "L":
                loops.append((pos, act[1]))
            elif tag == "X":
                arcs.append(graph.arc(act[1], dep, act[2]))
                pos += 1
                sorties.append((launch, act[3], pos))
                launch = None
            elif tag == "F":
                arcs.append(graph.arc(act[1], dep, act[2]))
                pos += 1
        return CoordinatedRoute(tuple(arcs), tuple(sorties), tuple(loops))


def dominated_by(a: Label, b: Label) -> bool:
    """True when b makes a redundant; only labels drawn from the same
    (k, i_C, i_T, fixed, sat, nT) bucket are comparable."""
    if (a.k, a.iC, a.iT, a.fixed, a.sat, a.nT) != \
            (b.k, b.iC, b.iT, b.fixed, b.sat, b.nT):
        raise ValueError("labels from different buckets are incomparable")
    if not (b.value <= a.value + EPS and (b.ng & a.ng) == b.ng
            and b.bC >= a.bC - EPS and b.bT >= a.bT - EPS):
        return False
    if a.iC == a.iT:
        return True
    return b.value + b.tau <= a.value + a.tau + EPS


def solve_pricing(inst: Instance, graph: MultiGraph, catalog=None, ng=None,
                  duals=None, restrictions: Restrictions | None = None,
                  limit: int = 40, *, dominance: bool = True,
                  trace: bool = False, loops_catalog=None,
                  context: PricingContext | None = None):
    if context is None:
        context = PricingContext(inst, graph, catalog, loops_catalog, ng)
    return context.solve(duals, restrictions, limit,
                         dominance=dominance, trace=trace)


def route_space(inst: Instance, graph: MultiGraph, catalog=None, ng=None,
                restrictions: Restrictions | None = None, *,
                loops_catalog=None,
                context: PricingContext | None = None):
    if context is None:
        context = PricingContext(inst, graph, catalog, loops_catalog, ng)
    return context.route_space(restrictions)
