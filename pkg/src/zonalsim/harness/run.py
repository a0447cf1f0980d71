"""Single runs and rate sweeps with per-run persistence and resume."""

from __future__ import annotations

import csv
import json
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..demand import DemandModel, build_od_weights, generate_arrivals
from ..engine import CarFollowingParams, SimParams, Simulation
from ..metrics import (
    RunSeries,
    TripRecord,
    aggregate,
    capacity_analysis,
    read_trips_csv,
    write_trajectory_csv,
    write_trips_csv,
)
from ..topogen import build_network
from .config import ExperimentConfig


@dataclass
class RunResult:
    fingerprint: str
    topology: str
    rate: float
    seed: int
    trips: list[TripRecord] = field(default_factory=list)
    series: RunSeries | None = None
    summary: dict = field(default_factory=dict)
    wall_time: float = 0.0
    error: str | None = None
    sim: Simulation | None = field(default=None, repr=False, compare=False)  # in-process only

    @property
    def ok(self) -> bool:
        return self.error is None


def run_dir(cfg: ExperimentConfig, topology: str, rate: float, seed: int) -> Path:
    return Path(cfg.out) / topology / f"rate_{rate:g}" / f"seed_{seed}"


def _simulate(cfg: ExperimentConfig, topology: str, rate: float, seed: int) -> Simulation:
    net = build_network(topology, cfg.grid)
    od = build_od_weights(net, seed, cfg.hot_pair_count, cfg.hot_multiplier)
    zones = cfg.grid.rows * cfg.grid.cols
    schedule = generate_arrivals(DemandModel(rate, zones, od, cfg.duration, seed))
    params = SimParams(dt=cfg.dt, car=CarFollowingParams(sigma=cfg.sigma), log_sample=cfg.log_sample)
    return Simulation(net, schedule, params, seed=seed).run()


def _signal_summary(sim: Simulation, cfg: ExperimentConfig) -> dict:
    greens = sim.green_log()
    prolongs = sim.prolong_log()
    return {
        "controllers": len(sim.controllers),
        "green_phases": len(greens),
        "max_green": max((g.duration for g in greens), default=0.0),
        "max_green_limit": cfg.grid.max_green,
        "prolongations": len(prolongs),
        "min_trigger_time_loss": min((p.trigger_time_loss for p in prolongs), default=None),
        "time_loss_threshold": cfg.grid.time_loss_threshold,
    }


def run_single(cfg: ExperimentConfig, rate: float, seed: int, topology: str | None = None) -> RunResult:
    """Build, simulate and score one (topology, rate, seed) case. Fully deterministic."""
    topology = topology or cfg.topology
    fp = cfg.fingerprint(topology, rate, seed)
    t0 = time.perf_counter()
    sim = _simulate(cfg, topology, rate, seed)
    cap = capacity_analysis(sim.series, cfg.warmup, cfg.capacity_threshold)
    trips = sim.trips
    summary = {
        "fingerprint": fp,
        "version": __version__,
        "inputs": cfg.semantic_dict(topology, rate, seed),
        "spawned": sim.counters["spawned"],
        "inserted": sim.counters["inserted"],
        "completed": sim.counters["completed"],
        "still_queued": sim.queued_count,
        "counters": dict(sim.counters),
        "bookkeeping_ok": sim.series.bookkeeping_ok(),
        "conservation_ok": sim.conservation_ok(),
        "min_bumper_gap": None if sim.min_bumper_gap == float("inf") else sim.min_bumper_gap,
        "max_abs_accel": sim.max_abs_accel,
        "capacity": {"stable": cap.stable, "slope": cap.slope, "threshold": cap.threshold},
        "signals": _signal_summary(sim, cfg),
        "stops_by_cause": _stops_by_cause(sim),
        "aggregate": aggregate(trips) if trips else {"empty": True, "count": 0},
    }
    return RunResult(fp, topology, float(rate), int(seed), list(trips), sim.series, summary, time.perf_counter() - t0, sim=sim)


def _stops_by_cause(sim: Simulation) -> dict[str, int]:
    out: dict[str, int] = {}
    for _vid, _a, _b, cause in sim.stop_log:
        out[cause] = out.get(cause, 0) + 1
    return dict(sorted(out.items()))


def write_result(res: RunResult, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    write_trips_csv(res.trips, directory / "trips.csv")
    res.series.to_csv(directory / "series.csv")
    sim = res.sim
    if sim is not None:
        with open(directory / "signals.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["controller", "phase", "start", "duration", "prolonged"])
            for g in sim.green_log():
                w.writerow([g.controller, g.phase, repr(g.start), repr(g.duration), g.prolonged])
        with open(directory / "prolongations.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["controller", "time", "phase", "green_elapsed", "trigger_time_loss"])
            for p in sim.prolong_log():
                w.writerow([p.controller, repr(p.time), p.phase, repr(p.green_elapsed), repr(p.trigger_time_loss)])
        if res.summary["inputs"]["trajectories"]:
            write_trajectory_csv(sim.trajectory, directory / "trajectory.csv")
    (directory / "summary.json").write_text(json.dumps(res.summary, indent=1, sort_keys=True) + "\n")
    (directory / "meta.json").write_text(json.dumps({"fingerprint": res.fingerprint, "wall_time": res.wall_time}) + "\n")
    err = directory / "error.json"
    if err.exists():
        err.unlink()


def load_result(directory: Path) -> RunResult:
    summary = json.loads((directory / "summary.json").read_text())
    meta = json.loads((directory / "meta.json").read_text())
    inp = summary["inputs"]
    res = RunResult(
        summary["fingerprint"],
        inp["topology"],
        inp["rate"],
        inp["seed"],
        read_trips_csv(directory / "trips.csv"),
        RunSeries.from_csv(directory / "series.csv", inp["dt"]),
        summary,
        meta.get("wall_time", 0.0),
    )
    return res


def _completed_fingerprint(directory: Path) -> str | None:
    try:
        return json.loads((directory / "meta.json").read_text())["fingerprint"]
    except (OSError, ValueError, KeyError):
        return None


def _task(args) -> RunResult:
    cfg, topology, rate, seed = args
    d = run_dir(cfg, topology, rate, seed)
    fp = cfg.fingerprint(topology, rate, seed)
    if _completed_fingerprint(d) == fp:
        res = load_result(d)
        res.summary["resumed"] = True
        return res
    try:
        res = run_single(cfg, rate, seed, topology)
        write_result(res, d)
        res.sim = None
        return res
    except Exception as exc:  # recorded per run; the sweep goes on
        d.mkdir(parents=True, exist_ok=True)
        msg = f"{type(exc).__name__}: {exc}"
        (d / "error.json").write_text(json.dumps({"fingerprint": fp, "error": msg, "trace": traceback.format_exc()}))
        return RunResult(fp, topology, float(rate), int(seed), error=msg)


@dataclass
class SweepResult:
    results: list[RunResult]
    capacity: dict[str, list[dict]]
    saturation: dict[str, float | None]


def run_sweep(cfg: ExperimentConfig, progress=None) -> SweepResult:
    """Run the topology x rate x round matrix.

    Rates are visited in ascending order. With ``stop_at_saturation`` a topology
    drops out of the sweep after its first unstable rate, judged by the mean
    N(t) slope over the rounds that ran without error.
    """
    rates = cfg.rate_list()
    active = list(cfg.topologies)
    results: list[RunResult] = []
    capacity: dict[str, list[dict]] = {t: [] for t in cfg.topologies}
    saturation: dict[str, float | None] = {t: None for t in cfg.topologies}
    pool = ProcessPoolExecutor(cfg.jobs) if cfg.jobs > 1 else None
    try:
        for rate in rates:
            if not active:
                break
            tasks = [(cfg, t, rate, s) for t in active for s in cfg.seeds()]
            batch = list(pool.map(_task, tasks)) if pool else [_task(x) for x in tasks]
            results.extend(batch)
            for topo in list(active):
                runs = [r for r in batch if r.topology == topo]
                good = [r for r in runs if r.ok]
                slopes = [r.summary["capacity"]["slope"] for r in good]
                mean = float(np.mean(slopes)) if slopes else float("nan")
                stable = bool(slopes) and mean <= cfg.capacity_threshold
                capacity[topo].append(
                    {"rate": rate, "rounds": len(good), "failed": len(runs) - len(good), "mean_slope": mean, "stable": stable}
                )
                if progress:
                    progress(topo, rate, mean, stable)
                if slopes and not stable and saturation[topo] is None:
                    saturation[topo] = rate
                    if cfg.stop_at_saturation:
                        active.remove(topo)
    finally:
        if pool:
            pool.shutdown()
    sweep = SweepResult(results, capacity, saturation)
    write_merged(cfg, sweep)
    return sweep


RUN_TABLE_COLUMNS = (
    "topology",
    "rate",
    "seed",
    "fingerprint",
    "error",
    "spawned",
    "completed",
    "completion_fraction",
    "slope",
    "stable",
    "drive_time_mean",
    "drive_time_iqr",
    "speed_deviation_mean",
    "progress_rate_mean",
    "energy_used_mean",
    "distance_mean",
    "total_halts",
)


def _run_row(r: RunResult) -> list:
    if not r.ok:
        return [r.topology, r.rate, r.seed, r.fingerprint, r.error] + [""] * (len(RUN_TABLE_COLUMNS) - 5)
    s = r.summary
    agg = s["aggregate"]
    cap = s["capacity"]
    if agg.get("empty"):
        stats = [""] * 7
    else:
        stats = [
            agg["drive_time"]["mean"],
            agg["drive_time"]["iqr"],
            agg["speed_deviation_all"]["mean"],
            agg["progress_rate_all"]["mean"],
            agg["energy_used"]["mean"],
            agg["distance"]["mean"],
            agg["total_halts"],
        ]
    frac = agg.get("completion_fraction", "")
    return [r.topology, r.rate, r.seed, r.fingerprint, "", s["spawned"], s["completed"], frac, cap["slope"], int(cap["stable"])] + stats


def write_merged(cfg: ExperimentConfig, sweep: SweepResult) -> None:
    """One run table and one capacity table per topology plus a sweep-level JSON."""
    root = Path(cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    for topo in cfg.topologies:
        d = root / topo
        d.mkdir(parents=True, exist_ok=True)
        rows = sorted((r for r in sweep.results if r.topology == topo), key=lambda r: (r.rate, r.seed))
        with open(d / "runs.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RUN_TABLE_COLUMNS)
            for r in rows:
                w.writerow(_run_row(r))
        with open(d / "capacity.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rate", "rounds", "failed", "mean_slope", "stable"])
            for c in sweep.capacity[topo]:
                w.writerow([c["rate"], c["rounds"], c["failed"], c["mean_slope"], int(c["stable"])])
    doc = {
        "topologies": list(cfg.topologies),
        "rates": cfg.rate_list(),
        "seeds": cfg.seeds(),
        "saturation_rate": sweep.saturation,
        "capacity": sweep.capacity,
        "failures": [
            {"topology": r.topology, "rate": r.rate, "seed": r.seed, "error": r.error} for r in sweep.results if not r.ok
        ],
    }
    (root / "sweep.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
