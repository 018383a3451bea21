"""Command-line front end: ``flashpim <command> [options]``.

Exit codes: 0 ok, 1 infeasible or empty result, 2 usage error, 3 I/O or
parse error.  Precedence for every setting: command-line flag, then config
file, then packaged default.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dse, interconnect, llm_workload, tiling
from .config import (PRESETS, ConfigError, PlaneConfig, load_cores, load_tech,
                     load_topology, with_overrides)

EXIT_OK, EXIT_EMPTY, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _plane(text: str) -> PlaneConfig:
    if text.lower() in PRESETS:
        return PRESETS[text.lower()]
    return PlaneConfig.parse(text)


def _shape(text: str) -> tuple[int, int]:
    try:
        m, n = (int(t) for t in text.lower().split("x"))
    except ValueError as exc:
        raise UsageError(f"bad shape {text!r}, expected MxN") from exc
    if m < 1 or n < 1:
        raise UsageError("shape dimensions must be positive")
    return m, n


def _emit_json(args, payload: dict):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.json == "-":
        sys.stdout.write(text)
    elif args.json:
        Path(args.json).write_text(text)


def _say(args, text: str):
    if args.json != "-":
        print(text)


def _context(args):
    tech = load_tech(args.tech)
    topo = load_topology(args.topology)
    topo = with_overrides(topo, bus_topology=args.bus, bus_bytes_per_sec=args.bus_speed,
                          n_plane=args.planes_per_die)
    cores = load_cores(args.topology)
    return tech, topo, cores


# ------------------------------------------------------------ commands -----

def cmd_sweep(args) -> int:
    tech, _, _ = _context(args)
    values = tuple(int(v) for v in args.values.split(",")) if args.values else ()
    try:
        spec = dse.SweepSpec(args.axis, values, _plane(args.base))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    text = dse.sweep_csv(dse.run_sweep(spec, tech))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_select(args) -> int:
    tech, _, _ = _context(args)
    budget = args.budget_us * 1e-6
    cfg = dse.select_plane(dse.grid_candidates(), budget, tech)
    if cfg is None:
        _say(args, f"no plane meets a {args.budget_us} us budget")
        _emit_json(args, {"budget_us": args.budget_us, "selected": None})
        return EXIT_EMPTY
    row = dse.evaluate(cfg, tech)
    _say(args, f"selected {cfg.label}: PIM {row.pim_latency * 1e6:.3f} us, "
               f"density {row.density:.2f} Gib/mm^2")
    _emit_json(args, {"budget_us": args.budget_us, "selected": cfg.label,
                      "pim_latency_us": row.pim_latency * 1e6,
                      "density_gib_per_mm2": row.density})
    return EXIT_OK


def cmd_tpot(args) -> int:
    tech, topo, cores = _context(args)
    if args.ctx < 1:
        raise UsageError("--ctx must be >= 1")
    try:
        model = llm_workload.get_model(args.model, args.models)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from exc
    cfg = _plane(args.plane)
    rep = llm_workload.estimate_tpot(model, topo, cfg, tech, args.ctx, cores,
                                     include_lm_head=args.lm_head)
    payload = rep.as_dict()
    lines = [f"{model.name}  ctx={args.ctx}  plane={cfg.label}",
             f"TPOT {rep.total_tpot * 1e3:.3f} ms  (per block {rep.per_block * 1e6:.2f} us)"]
    for k, v in rep.breakdown().items():
        lines.append(f"  {k:<11s}{v * 1e3:9.3f} ms")
    if args.baseline:
        base = llm_workload.estimate_baseline_tpot(model, topo, tech, args.ctx, cores)
        payload["baseline_tpot_s"] = base.total_tpot
        payload["speedup"] = base.total_tpot / rep.total_tpot
        lines.append(f"serial conventional-plane baseline {base.total_tpot:.3f} s "
                     f"({payload['speedup']:.0f}x)")
    _say(args, "\n".join(lines))
    if args.csv:
        Path(args.csv).write_text(rep.to_csv())
    _emit_json(args, payload)
    return EXIT_OK


def cmd_tiling(args) -> int:
    tech, topo, _ = _context(args)
    cfg = _plane(args.plane)
    try:
        if args.plan:
            plan = tiling.TilingPlan.parse(args.plan, interconnect.unit_cols(cfg))
            cost = tiling.cost_smvm(plan, args.m, args.n, topo, cfg, tech)
        else:
            plan, cost = tiling.best_plan(args.m, args.n, topo, cfg, tech, pattern=args.pattern)
    except tiling.InfeasiblePlanError as exc:
        _say(args, f"infeasible: {exc}")
        _emit_json(args, {"m": args.m, "n": args.n, "plan": None})
        return EXIT_EMPTY
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    c = cost.as_dict()
    _say(args, f"{plan}\n" + "\n".join(f"  {k:<11s}{v * 1e6:9.3f} us" for k, v in c.items()))
    _emit_json(args, {"m": args.m, "n": args.n, "plan": str(plan),
                      "cost_us": {k: v * 1e6 for k, v in c.items()}})
    return EXIT_OK


def cmd_bus(args) -> int:
    tech, topo, _ = _context(args)
    m, n = _shape(args.shape)
    cfg = _plane(args.plane)
    from dataclasses import replace
    res = {}
    trace = interconnect.Trace() if args.trace else None
    for kind in ("shared", "htree"):
        t = interconnect.Trace() if trace is not None else None
        r = interconnect.simulate_die_mvm(m, n, args.planes, cfg, tech,
                                          replace(topo, bus_topology=kind), trace=t)
        res[kind] = r.total
        if t is not None:
            trace.extend(interconnect.TransferEvent(f"{kind}:{e.event}", e.plane, e.start,
                                                    e.end, e.nbytes) for e in t)
    red = 1.0 - res["htree"] / res["shared"]
    _say(args, f"{m}x{n} on {args.planes} x {cfg.label}\n"
               f"  shared {res['shared'] * 1e6:9.3f} us\n"
               f"  htree  {res['htree'] * 1e6:9.3f} us\n"
               f"  reduction {red * 100:.1f} %")
    if trace is not None:
        Path(args.trace).write_text(trace.to_csv())
    _emit_json(args, {"m": m, "n": n, "planes": args.planes, "plane": cfg.label,
                      "shared_us": res["shared"] * 1e6, "htree_us": res["htree"] * 1e6,
                      "reduction": red})
    return EXIT_OK


def cmd_area(args) -> int:
    tech, topo, _ = _context(args)
    rep = dse.area_report(_plane(args.plane), topo, tech)
    _say(args, f"plane {rep.plane_area:.5f} mm^2 x {rep.n_planes} = {rep.total_pim_area:.2f} mm^2 "
               f"(die budget {rep.budget_low}-{rep.budget_high} mm^2)\n"
               + "\n".join(f"  {k:<10s}{v * 100:6.2f} %" for k, v in rep.ratios.items())
               + f"\n  total     {rep.peripheral_ratio * 100:6.2f} %")
    _emit_json(args, rep.as_dict())
    return EXIT_OK


def _model(args):
    try:
        return llm_workload.get_model(args.model, args.models)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from exc


def cmd_lifetime(args) -> int:
    tech, topo, cores = _context(args)
    model = _model(args)
    if args.tpot_ms is not None:
        tpot = args.tpot_ms * 1e-3
    else:
        tpot = llm_workload.estimate_tpot(model, topo, _plane(args.plane), tech, args.ctx,
                                          cores).total_tpot
    try:
        rep = llm_workload.lifetime_projection(args.slc_gib * 2**30, tpot, model,
                                               args.pe_cycles, args.boost)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _say(args, f"SLC lifetime {rep.years:.2f} years\n"
         + "\n".join(f"  {k}: {v}" for k, v in rep.assumptions.items()))
    _emit_json(args, rep.as_dict())
    return EXIT_OK


def cmd_kv(args) -> int:
    _, topo, _ = _context(args)
    model = _model(args)
    if args.tokens < 0:
        raise UsageError("--tokens must be >= 0")
    t = llm_workload.kv_write_overhead(model, args.tokens, topo)
    payload = {"model": model.name, "tokens": args.tokens,
               "bytes": llm_workload.kv_bytes(model, args.tokens), "seconds": t}
    text = f"KV write {payload['bytes'] / 1e9:.3f} GB in {t * 1e3:.1f} ms"
    if args.saving_ms is not None:
        n = llm_workload.break_even_tokens(t, args.saving_ms * 1e-3)
        payload["break_even_tokens"] = n
        text += "\nbreak-even: " + ("never amortizes" if n is None else f"{n} tokens")
    _say(args, text)
    _emit_json(args, payload)
    return EXIT_OK


# -------------------------------------------------------------- parser -----

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tech", help="YAML file with device constants")
    common.add_argument("--topology", help="YAML file with topology/cores sections")
    common.add_argument("--models", help="YAML model zoo")
    common.add_argument("--bus", choices=("shared", "htree"), help="intra-die bus topology")
    common.add_argument("--bus-speed", type=float, help="bus bandwidth, bytes/s")
    common.add_argument("--planes-per-die", type=int, help="planes per die")
    common.add_argument("--json", metavar="PATH", help="write JSON result ('-' = stdout only)")

    p = argparse.ArgumentParser(prog="flashpim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", parents=[common], help="plane-size sweep to CSV")
    s.add_argument("--axis", required=True, choices=dse.AXES)
    s.add_argument("--values", help="comma-separated ascending values")
    s.add_argument("--base", default=dse.SWEEP_BASE.label, help="fixed plane config")
    s.add_argument("--out", help="CSV path (default stdout)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("select", parents=[common], help="pick the densest plane within a budget")
    s.add_argument("--budget-us", type=float, default=2.2)
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("tpot", parents=[common], help="time per output token")
    s.add_argument("--model", default="opt-30b")
    s.add_argument("--ctx", type=int, default=1024)
    s.add_argument("--plane", default="size_a")
    s.add_argument("--lm-head", action="store_true")
    s.add_argument("--baseline", action="store_true", help="also run the serial conventional baseline")
    s.add_argument("--csv", help="per-op CSV path")
    s.set_defaults(func=cmd_tpot)

    s = sub.add_parser("tiling", parents=[common], help="best sMVM tiling plan")
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--plane", default="size_a")
    s.add_argument("--pattern", help="restrict to a method pattern, e.g. C/C/R/R")
    s.add_argument("--plan", help="cost this plan, e.g. 'C(7)/C(2)/N(1)/R(56)'")
    s.set_defaults(func=cmd_tiling)

    s = sub.add_parser("bus", parents=[common], help="shared bus vs H-tree for one die")
    s.add_argument("--shape", required=True, help="MxN")
    s.add_argument("--planes", type=int, default=64)
    s.add_argument("--plane", default="size_a")
    s.add_argument("--trace", metavar="CSV", help="write the event trace")
    s.set_defaults(func=cmd_bus)

    s = sub.add_parser("area", parents=[common], help="PIM array area per die")
    s.add_argument("--plane", default="size_a")
    s.set_defaults(func=cmd_area)

    s = sub.add_parser("lifetime", parents=[common], help="SLC lifetime projection")
    s.add_argument("--model", default="opt-30b")
    s.add_argument("--slc-gib", type=float, default=32.0)
    s.add_argument("--tpot-ms", type=float, help="default: estimated TPOT")
    s.add_argument("--ctx", type=int, default=1024)
    s.add_argument("--plane", default="size_a")
    s.add_argument("--pe-cycles", type=float, default=10_000)
    s.add_argument("--boost", type=float, default=50.0)
    s.set_defaults(func=cmd_lifetime)

    s = sub.add_parser("kv-overhead", parents=[common], help="initial KV cache write time")
    s.add_argument("--model", default="opt-30b")
    s.add_argument("--tokens", type=int, default=1024)
    s.add_argument("--saving-ms", type=float, help="per-token saving for break-even")
    s.set_defaults(func=cmd_kv)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"flashpim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, OSError) as exc:
        print(f"flashpim: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
