"""Command-line entry point: simulate, sweep, report, analyze-topology."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..netcore import Router, route_length_ratio, sample_anchor_pairs
from ..topogen import GridSpec, build_network, count_conflict_points
from .config import OUT_ENV, TOPOLOGIES, ExperimentConfig, default_out_root, load_config, parse_rates
from .report import emit_report
from .run import run_single, run_sweep, write_result


def _cmd_simulate(args) -> int:
    out = Path(args.out) if args.out else default_out_root() / "simulate" / f"{args.topology}_r{args.rate:g}_s{args.seed}"
    cfg = ExperimentConfig(
        topologies=(args.topology,),
        grid=GridSpec(rows=args.rows, cols=args.cols),
        dt=args.dt,
        duration=args.duration,
        log_sample=None if args.log_all else args.log_sample,
        sigma=args.sigma,
        trajectories=args.trajectories,
        out=out,
    )
    res = run_single(cfg, args.rate, args.seed)
    write_result(res, out)
    s = res.summary
    agg = s["aggregate"]
    line = {
        "out": str(out),
        "spawned": s["spawned"],
        "completed": s["completed"],
        "stable": s["capacity"]["stable"],
        "slope": round(s["capacity"]["slope"], 6),
        "wall_time_s": round(res.wall_time, 2),
    }
    if not agg.get("empty"):
        line["mean_drive_time_s"] = round(agg["drive_time"]["mean"], 2)
        line["total_halts"] = agg["total_halts"]
    print(json.dumps(line))
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    cfg = cfg.with_overrides(
        rates=parse_rates(args.rates) if args.rates else None,
        rounds=args.rounds,
        jobs=args.jobs,
        out=Path(args.out) if args.out else None,
    )
    if args.stop_at_saturation:
        cfg = cfg.with_overrides(stop_at_saturation=True)

    def progress(topo, rate, slope, stable):
        print(f"{topo:14s} rate {rate:7g}  mean slope {slope:+.5f}  {'stable' if stable else 'UNSTABLE'}", flush=True)

    sweep = run_sweep(cfg, progress=progress)
    failed = [r for r in sweep.results if not r.ok]
    print(json.dumps({"out": str(cfg.out), "saturation_rate": sweep.saturation, "runs": len(sweep.results), "failed": len(failed)}))
    return 1 if failed else 0


def _cmd_report(args) -> int:
    formats = tuple(args.format) if args.format else ("csv", "svg")
    if "svg" in formats and "csv" not in formats:
        formats = formats + ("csv",)
    for p in emit_report(args.input, formats, args.out):
        print(p)
    return 0


def _cmd_analyze(args) -> int:
    if not (args.conflicts or args.route_ratio):
        args.conflicts = args.route_ratio = True
    topologies = TOPOLOGIES if args.topology == "all" else (args.topology,)
    doc: dict = {}
    if args.conflicts:
        kinds = {
            "zonal": "zonal-boundary",
            "trad-static": "signalized-intersection",
            "trad-adaptive": "signalized-intersection",
        }
        doc["conflict_points"] = {}
        for t in topologies:
            c = count_conflict_points(kinds[t])
            doc["conflict_points"][t] = {"junction": kinds[t], "crossing": c.crossing, "merging": c.merging, "diverging": c.diverging, "total": c.total}
        rb = count_conflict_points("roundabout")
        doc["conflict_points"]["roundabout (reference)"] = {"crossing": rb.crossing, "merging": rb.merging, "diverging": rb.diverging, "total": rb.total}
    if args.route_ratio:
        spec = GridSpec(rows=args.rows, cols=args.cols)
        zonal = build_network("zonal", spec)
        trad = build_network("trad-static", spec)
        pairs = sample_anchor_pairs([zonal, trad], args.pairs, args.seed)
        ratio = route_length_ratio(zonal, trad, pairs, Router(zonal), Router(trad))
        doc["route_length_ratio"] = {"grid": f"{args.rows}x{args.cols}", "pairs": args.pairs, "seed": args.seed, "zonal_over_traditional": ratio}
    print(json.dumps(doc, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="zonalsim",
        description=f"Zonal loop vs signalized grid traffic simulator. Default output root: ${OUT_ENV} or ./runs",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one (topology, rate, seed) case")
    p.add_argument("--topology", choices=TOPOLOGIES, required=True)
    p.add_argument("--rows", type=int, default=4)
    p.add_argument("--cols", type=int, default=4)
    p.add_argument("--rate", type=float, required=True, help="vehicles/hour/zone")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--duration", type=float, default=1800.0, help="seconds")
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.0, help="driver imperfection")
    p.add_argument("--log-sample", type=int, default=1000, help="vehicles with per-step trajectory logging")
    p.add_argument("--log-all", action="store_true", help="log every vehicle")
    p.add_argument("--trajectories", action="store_true", help="write trajectory.csv")
    p.add_argument("--out", help="run directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="topology x rate x round sweep from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--rates", help="A:B:STEP in vehicles/hour/zone, B inclusive")
    p.add_argument("--rounds", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")
    p.add_argument("--stop-at-saturation", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="trend tables and plots from a results directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", action="append", choices=("csv", "json", "svg"))
    p.add_argument("--out", help="report directory (default IN/report)")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("analyze-topology", help="static topology comparisons")
    p.add_argument("--topology", choices=TOPOLOGIES + ("all",), default="all")
    p.add_argument("--conflicts", action="store_true")
    p.add_argument("--route-ratio", action="store_true")
    p.add_argument("--rows", type=int, default=10)
    p.add_argument("--cols", type=int, default=10)
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=_cmd_analyze)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
