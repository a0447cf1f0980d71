"""Trend tables and plots from a results directory.

Every plotted value is first written to CSV and the plots are drawn from the
CSV rows read back from disk, so the tables are the source of truth.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

import numpy as np

from ..metrics import RunSeries, quantiles, read_trips_csv

TREND_METRICS = ("drive_time", "distance", "energy_used", "speed_deviation", "progress_rate", "halts")
TREND_COLUMNS = ("topology", "rate", "metric", "n", "mean", "median", "q1", "q3", "iqr")
NT_COLUMNS = ("topology", "rate", "time", "present", "queued", "rounds")
LABELS = {
    "drive_time": "drive time t_T (s)",
    "distance": "distance d_T (m)",
    "energy_used": "energy used (J)",
    "speed_deviation": "mean speed deviation",
    "progress_rate": "mean progress rate",
    "halts": "halts per run",
}
TOPO_ORDER = ("zonal", "trad-static", "trad-adaptive")


def find_runs(root: Path) -> list[Path]:
    return sorted(p.parent for p in Path(root).glob("*/rate_*/seed_*/summary.json"))


def _topo_key(t: str):
    return (TOPO_ORDER.index(t) if t in TOPO_ORDER else len(TOPO_ORDER), t)


def collect(root: Path) -> tuple[list[dict], list[dict]]:
    """Trend rows and N(t) rows for every (topology, rate) in ``root``."""
    runs = find_runs(root)
    if not runs:
        raise FileNotFoundError(f"no run results under {root}")
    groups: dict[tuple[str, float], list[Path]] = defaultdict(list)
    for d in runs:
        inp = json.loads((d / "summary.json").read_text())["inputs"]
        groups[(inp["topology"], float(inp["rate"]))].append(d)
    trend: list[dict] = []
    nt: list[dict] = []
    for (topo, rate) in sorted(groups, key=lambda k: (_topo_key(k[0]), k[1])):
        dirs = groups[(topo, rate)]
        per_run = [read_trips_csv(d / "trips.csv") for d in dirs]
        trips = [r for run in per_run for r in run]
        done = [r for r in trips if r.completed]
        values = {
            "drive_time": [r.drive_time for r in done],
            "distance": [r.distance for r in done],
            "energy_used": [r.energy_used for r in done],
            "speed_deviation": [r.mean_speed_deviation for r in trips],
            "progress_rate": [r.mean_progress_rate for r in trips],
            "halts": [sum(r.halts for r in run) for run in per_run],
        }
        for metric in TREND_METRICS:
            vals = values[metric]
            if not vals:
                continue
            q = quantiles(vals)
            trend.append(
                {
                    "topology": topo,
                    "rate": rate,
                    "metric": metric,
                    "n": len(vals),
                    "mean": q["mean"],
                    "median": q["median"],
                    "q1": q["q1"],
                    "q3": q["q3"],
                    "iqr": q["iqr"],
                }
            )
        series = [RunSeries.from_csv(d / "series.csv") for d in dirs]
        n = min(len(s) for s in series)
        present = np.mean([s.present[:n] for s in series], axis=0)
        queued = np.mean([s.queued[:n] for s in series], axis=0)
        for k in range(n):
            nt.append(
                {
                    "topology": topo,
                    "rate": rate,
                    "time": series[0].time[k],
                    "present": float(present[k]),
                    "queued": float(queued[k]),
                    "rounds": len(series),
                }
            )
    return trend, nt


def _write_csv(rows: list[dict], columns, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def read_trends_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {**r, "rate": float(r["rate"]), "n": int(r["n"]), **{k: float(r[k]) for k in ("mean", "median", "q1", "q3", "iqr")}}
            for r in csv.DictReader(fh)
        ]


def read_nt_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {**r, "rate": float(r["rate"]), "time": float(r["time"]), "present": float(r["present"]), "queued": float(r["queued"])}
            for r in csv.DictReader(fh)
        ]


def plot_trends(trend_csv: Path, out_dir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_trends_csv(trend_csv)
    written = []
    for metric in TREND_METRICS:
        sel = [r for r in rows if r["metric"] == metric]
        if not sel:
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        for topo in sorted({r["topology"] for r in sel}, key=_topo_key):
            pts = sorted((r for r in sel if r["topology"] == topo), key=lambda r: r["rate"])
            x = [r["rate"] for r in pts]
            ax.plot(x, [r["mean"] for r in pts], marker="o", label=topo)
            ax.fill_between(x, [r["q1"] for r in pts], [r["q3"] for r in pts], alpha=0.2)
        ax.set_xlabel("traffic rate (veh/h/zone)")
        ax.set_ylabel(LABELS[metric])
        ax.legend()
        ax.grid(alpha=0.3)
        fig.tight_layout()
        path = out_dir / f"trend_{metric}.svg"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written


def plot_nt(nt_csv: Path, out_dir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_nt_csv(nt_csv)
    rates = sorted({r["rate"] for r in rows})
    ncols = min(4, len(rates))
    nrows = -(-len(rates) // ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(4 * ncols, 3 * nrows), squeeze=False)
    for ax, rate in zip(axes.flat, rates):
        sel = [r for r in rows if r["rate"] == rate]
        for topo in sorted({r["topology"] for r in sel}, key=_topo_key):
            pts = [r for r in sel if r["topology"] == topo]
            ax.plot([r["time"] for r in pts], [r["present"] + r["queued"] for r in pts], label=topo)
        ax.set_title(f"{rate:g} veh/h/zone")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("N(t) incl. origin queues")
        ax.grid(alpha=0.3)
    for ax in list(axes.flat)[len(rates):]:
        ax.set_visible(False)
    axes.flat[0].legend()
    fig.tight_layout()
    path = out_dir / "nt.svg"
    fig.savefig(path)
    plt.close(fig)
    return [path]


def emit_report(root: str | Path, formats: tuple[str, ...] = ("csv", "svg"), out: str | Path | None = None) -> list[Path]:
    """Write trend and N(t) tables, plus JSON and SVG views when requested."""
    root = Path(root)
    out_dir = Path(out) if out else root / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    for f in formats:
        if f not in ("csv", "json", "svg"):
            raise ValueError(f"unknown report format {f!r}")
    trend, nt = collect(root)
    trend_csv = out_dir / "trends.csv"
    nt_csv = out_dir / "nt.csv"
    _write_csv(trend, TREND_COLUMNS, trend_csv)
    _write_csv(nt, NT_COLUMNS, nt_csv)
    written = [trend_csv, nt_csv]
    if "json" in formats:
        path = out_dir / "trends.json"
        path.write_text(json.dumps(trend, indent=1) + "\n")
        written.append(path)
    if "svg" in formats:
        written += plot_trends(trend_csv, out_dir)
        written += plot_nt(nt_csv, out_dir)
    return written
