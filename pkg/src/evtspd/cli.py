"""Experiment harness.

Subcommands: `gen` writes random instance files, rejecting any the
savings construction cannot serve; `solve` runs the exact and/or the
neighborhood-search solver over instance files and prints one CSV row per
(instance, method, sweep value); `emit-lp` writes an instance's arc model
in LP format; `oracle` exhaustively solves a tiny instance; `bench`
generates and solves in one step and appends a mean summary row.

All flags are long-form. CSV output is comma-separated with a header row
and LF line endings; reruns with the same flags reproduce every field but
wall_time_s.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from .bp import solve_bp
from .core import (Instance, Params, compute_matrices, generate_instance,
                   parse_instance, serialize_instance)
from .milp import build_arc_model, emit_lp
from .multigraph import build_multigraph
from .oracle import brute_force
from .vns import McwsFailure, VnsConfig, mcws_initial, vns_solve

CSV_FIELDS = ("instance", "method", "sweep_key", "sweep_value", "status",
              "cost", "bb_nodes", "root_gap_pct", "cg_iterations", "columns",
              "iterations", "shakes", "seed", "wall_time_s")

_PARAM_OPTS = {
    "truck_capacity": float, "drone_capacity": float, "truck_speed": float,
    "drone_speed": float, "speed_ratio": float, "energy_ratio": float,
    "charge_time": float, "service_time": float, "launch_time": float,
    "retrieve_time": float, "payload_capacity": float, "ng_size": int,
    "empty_range_factor": float, "max_leg": int,
}
_VARIANT_OPTS = ("loops", "launch_retrieve", "weight_range")


def _add_param_opts(p: argparse.ArgumentParser) -> None:
    for name, typ in _PARAM_OPTS.items():
        p.add_argument("--" + name.replace("_", "-"), type=typ,
                       default=None, dest="p_" + name)
    for name in _VARIANT_OPTS:
        p.add_argument("--" + name.replace("_", "-"), action="store_const",
                       const=True, default=None, dest="p_" + name)


def _param_overrides(args) -> dict:
    out = {}
    for name in list(_PARAM_OPTS) + list(_VARIANT_OPTS):
        v = getattr(args, "p_" + name, None)
        if v is not None:
            out[name] = v
    return out


def with_params(inst: Instance, **changes) -> Instance:
    """Instance with parameter overrides; derived matrices follow unless
    they were given explicitly, and the speed ratio tracks speed edits."""
    if (("drone_speed" in changes or "truck_speed" in changes)
            and "speed_ratio" not in changes):
        ds = changes.get("drone_speed", inst.params.drone_speed)
        ts = changes.get("truck_speed", inst.params.truck_speed)
        changes["speed_ratio"] = ds / ts
    p = replace(inst.params, **changes)
    if inst.explicit_truck or inst.explicit_drone:
        return Instance(p, inst.nodes, inst.c_T, inst.c_D, inst.e_T,
                        inst.e_D, inst.explicit_truck, inst.explicit_drone)
    return Instance(p, inst.nodes, *compute_matrices(inst.nodes, p))


def _build_params(overrides: dict) -> Params:
    if (("drone_speed" in overrides or "truck_speed" in overrides)
            and "speed_ratio" not in overrides):
        base = Params()
        ds = overrides.get("drone_speed", base.drone_speed)
        ts = overrides.get("truck_speed", base.truck_speed)
        overrides = dict(overrides, speed_ratio=ds / ts)
    return Params(**overrides)


def _writer(out_path: str | None):
    if out_path and out_path != "-":
        fh = open(out_path, "w", newline="\n")
    else:
        fh = sys.stdout
    w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n",
                       restval="")
    w.writeheader()
    return fh, w


def _gen_one(n_customers, n_stations, seed, params, tries=50):
    """First MCWS-serviceable instance from seed, seed+1, ..."""
    for k in range(tries):
        inst = generate_instance(n_customers, n_stations, seed + k, params)
        try:
            mcws_initial(inst, build_multigraph(inst))
        except McwsFailure:
            continue
        return inst, seed + k
    raise RuntimeError(
        f"no feasible instance within {tries} seeds from {seed}")


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = _build_params(_param_overrides(args))
    base = args.seed
    for ix in range(args.count):
        inst, used = _gen_one(args.customers, args.stations,
                              base + 1000 * ix, params)
        name = (f"c{args.customers}_s{args.stations}_"
                f"seed{base}_{ix:03d}.evt")
        (out / name).write_text(serialize_instance(inst))
        print(out / name)
    return 0


def _sweep_points(spec: str | None):
    if not spec:
        return [(None, None)]
    key, _, tail = spec.partition("=")
    key = key.strip()
    if key not in _PARAM_OPTS:
        raise SystemExit(f"unknown sweep key {key!r}")
    typ = _PARAM_OPTS[key]
    vals = [typ(v) for v in tail.split(",") if v.strip()]
    if not vals:
        raise SystemExit("empty sweep value list")
    return [(key, v) for v in vals]


def _solve_rows(inst_path, inst, methods, args, rows):
    """Appends one row per method/sweep point; returns worst exit code."""
    code = 0
    for key, val in _sweep_points(args.sweep):
        cur = with_params(inst, **{key: val}) if key else inst
        for method in methods:
            row = {"instance": inst_path, "method": method,
                   "sweep_key": key or "", "sweep_value": val
                   if val is not None else ""}
            if method == "bp":
                target = (with_params(cur, ng_size=args.ng)
                          if args.ng is not None else cur)
                res = solve_bp(target, time_limit=args.time_limit)
                row.update(status=res.status, cost=f"{res.cost:.6f}",
                           bb_nodes=res.bb_nodes,
                           root_gap_pct=f"{res.root_gap_pct:.4f}",
                           cg_iterations=res.cg_iterations,
                           columns=res.columns,
                           wall_time_s=f"{res.wall_time_s:.3f}")
                if res.status == "time_limit":
                    code = max(code, 2)
            else:
                cfg = VnsConfig(seed=args.seed)
                if args.max_iteration is not None:
                    cfg = replace(cfg, max_iteration=args.max_iteration)
                if args.max_stopping is not None:
                    cfg = replace(cfg, max_stopping=args.max_stopping)
                res = vns_solve(cur, cfg)
                row.update(status="heuristic", cost=f"{res.cost:.6f}",
                           iterations=res.iterations, shakes=res.shakes,
                           seed=res.seed,
                           wall_time_s=f"{res.wall_time_s:.3f}")
            rows.append(row)
    return code


def _mean_row(rows):
    vals = [float(r["cost"]) for r in rows if r.get("cost")]
    times = [float(r["wall_time_s"]) for r in rows if r.get("wall_time_s")]
    return {"instance": "mean", "method": "",
            "cost": f"{sum(vals) / len(vals):.6f}" if vals else "",
            "wall_time_s": f"{sum(times) / len(times):.3f}" if times else ""}


def cmd_solve(args) -> int:
    methods = ("bp", "vns") if args.method == "both" else (args.method,)
    rows: list[dict] = []
    code = 0
    for path in args.instance:
        inst = parse_instance(Path(path).read_text())
        over = _param_overrides(args)
        if over:
            inst = with_params(inst, **over)
        code = max(code, _solve_rows(path, inst, methods, args, rows))
    if len(args.instance) > 1:
        rows.append(_mean_row(rows))
    fh, w = _writer(args.out)
    for row in rows:
        w.writerow(row)
    if fh is not sys.stdout:
        fh.close()
    return code


def cmd_emit_lp(args) -> int:
    inst = parse_instance(Path(args.instance).read_text())
    over = _param_overrides(args)
    if over:
        inst = with_params(inst, **over)
    model = build_arc_model(inst, build_multigraph(inst))
    text = emit_lp(model)
    if args.out and args.out != "-":
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_oracle(args) -> int:
    inst = parse_instance(Path(args.instance).read_text())
    over = _param_overrides(args)
    if over:
        inst = with_params(inst, **over)
    res = brute_force(inst, prune=not args.no_prune)
    fh, w = _writer(args.out)
    w.writerow({"instance": args.instance, "method": "oracle",
                "status": "optimal" if res.feasible else "infeasible",
                "cost": f"{res.cost:.6f}" if res.feasible else "",
                "columns": res.counts["evaluated"],
                "bb_nodes": res.counts["structures"]})
    if fh is not sys.stdout:
        fh.close()
    return 0


def cmd_bench(args) -> int:
    params = _build_params(_param_overrides(args))
    methods = ("bp", "vns") if args.method == "both" else (args.method,)
    rows: list[dict] = []
    code = 0
    for ix in range(args.count):
        inst, used = _gen_one(args.customers, args.stations,
                              args.seed + 1000 * ix, params)
        name = f"gen:c{args.customers}s{args.stations}:{used}"
        code = max(code, _solve_rows(name, inst, methods, args, rows))
    rows.append(_mean_row(rows))
    fh, w = _writer(args.out)
    for row in rows:
        w.writerow(row)
    if fh is not sys.stdout:
        fh.close()
    return code


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evtspd")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    g = sub.add_parser("gen", help="write random instance files")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--customers", type=int, required=True)
    g.add_argument("--stations", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    _add_param_opts(g)
    g.set_defaults(func=cmd_gen)

    def solver_flags(p):
        p.add_argument("--method", choices=("bp", "vns", "both"),
                       default="bp")
        p.add_argument("--ng", type=int, default=None)
        p.add_argument("--time-limit", type=float, default=3600.0)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--max-iteration", type=int, default=None)
        p.add_argument("--max-stopping", type=int, default=None)
        p.add_argument("--sweep", default=None,
                       metavar="KEY=V1,V2,...")
        p.add_argument("--out", default=None)
        _add_param_opts(p)

    s = sub.add_parser("solve", help="solve instance files, CSV out")
    s.add_argument("--instance", required=True, action="append")
    solver_flags(s)
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("emit-lp", help="write the arc model as LP")
    e.add_argument("--instance", required=True)
    e.add_argument("--out", default=None)
    _add_param_opts(e)
    e.set_defaults(func=cmd_emit_lp)

    o = sub.add_parser("oracle", help="exhaustive solve, tiny instances")
    o.add_argument("--instance", required=True)
    o.add_argument("--no-prune", action="store_true")
    o.add_argument("--out", default=None)
    _add_param_opts(o)
    o.set_defaults(func=cmd_oracle)

    b = sub.add_parser("bench", help="generate and solve in one step")
    b.add_argument("--count", type=int, default=1)
    b.add_argument("--customers", type=int, required=True)
    b.add_argument("--stations", type=int, required=True)
    solver_flags(b)
    b.set_defaults(func=cmd_bench)

    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
