"""Acceptance suite: one test and one printed PASS/FAIL line per criterion.

Criteria 7 to 10 share one desk-scale sweep (configs/acceptance.toml). Set
ZONALSIM_ACCEPTANCE_OUT to keep its results between sessions; completed runs
with a matching fingerprint are then reused.
"""

from __future__ import annotations

import csv
import json
import math
import os
import random
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import network
from scipy import stats
from test_metrics import brute_force_halts

from zonalsim.demand import DemandModel, build_od_weights, generate_arrivals
from zonalsim.energy import EnergyLedger, EVParams, accumulate, ledger_for_cycle, wheel_power
from zonalsim.harness import emit_report, load_config, run_sweep
from zonalsim.harness.run import run_dir
from zonalsim.metrics import (
    RunSeries,
    capacity_analysis,
    detect_halts,
    progress_rate_sample,
    read_trips_csv,
    speed_deviation_sample,
)
from zonalsim.netcore import Router, route_length_ratio, sample_anchor_pairs
from zonalsim.topogen import GridSpec, build_network, count_conflict_points

ROOT = Path(__file__).resolve().parents[1]
CONFIG = ROOT / "configs" / "acceptance.toml"
TRADITIONAL = ("trad-static", "trad-adaptive")
KMH = 1 / 3.6


@pytest.fixture
def verdict(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    cfg = load_config(CONFIG)
    out = os.environ.get("ZONALSIM_ACCEPTANCE_OUT")
    cfg = cfg.with_overrides(out=Path(out) if out else tmp_path_factory.mktemp("acceptance") / "out")
    t0 = time.perf_counter()
    result = run_sweep(cfg)
    return cfg, result, time.perf_counter() - t0


@pytest.fixture(scope="module")
def trends(sweep):
    cfg, _, _ = sweep
    emit_report(cfg.out, ("csv",))
    with open(cfg.out / "report" / "trends.csv", newline="") as fh:
        return {(r["topology"], float(r["rate"]), r["metric"]): r for r in csv.DictReader(fh)}


def test_01_conflict_points(verdict):
    t0 = time.perf_counter()
    got = {k: count_conflict_points(k).total for k in ("signalized-intersection", "roundabout", "zonal-boundary")}
    dt = time.perf_counter() - t0
    ok = got == {"signalized-intersection": 32, "roundabout": 8, "zonal-boundary": 0} and dt < 1.0
    verdict(1, ok, f"conflict points {got} in {dt * 1e3:.2f} ms")


def test_02_route_length_ratio(verdict):
    spec = GridSpec(rows=10, cols=10)
    zonal, trad = build_network("zonal", spec), build_network("trad-static", spec)
    t0 = time.perf_counter()
    pairs = sample_anchor_pairs([zonal, trad], 1000, seed=1)
    ratio = route_length_ratio(zonal, trad, pairs, Router(zonal), Router(trad))
    dt = time.perf_counter() - t0
    ok = len(pairs) >= 1000 and 1.18 <= ratio <= 1.48 and dt < 10.0
    verdict(2, ok, f"zonal/traditional mean route length {ratio:.4f} over {len(pairs)} pairs in {dt:.2f} s")


def test_03_metric_unit_suites(verdict):
    vmax = 50 * KMH
    failures = []

    def check(name, cond):
        if not cond:
            failures.append(name)

    d_hat = np.array([0.6, 0.8])
    check("rho full speed", abs(progress_rate_sample(tuple(vmax * d_hat), (0, 0), (60, 80), vmax) - 1.0) <= 1e-9)
    check("rho stopped", progress_rate_sample((0, 0), (0, 0), (60, 80), vmax) == 0.0)
    check("rho perpendicular", abs(progress_rate_sample((vmax * 0.8, -vmax * 0.6), (0, 0), (60, 80), vmax)) <= 1e-9)
    check("rho reverse", abs(progress_rate_sample(tuple(-vmax * d_hat), (0, 0), (60, 80), vmax) + 1.0) <= 1e-9)
    check("dv at limit", speed_deviation_sample(vmax, vmax) == 0.0)
    check("dv stopped", speed_deviation_sample(0.0, vmax) == -1.0)
    check("dv half", abs(speed_deviation_sample(25 * KMH, vmax) + 0.5) <= 1e-9)
    check("halts cruise", detect_halts([vmax] * 100, 1.0) == 0)
    check("halts one", detect_halts([v * KMH for v in (12, 8, 7, 9, 12)], 1.0) == 1)
    check("halts none", detect_halts([v * KMH for v in (8, 12, 8, 12, 8)], 1.0) == 0)
    rng = random.Random(2024)
    mismatches = 0
    for _ in range(10_000):
        dt = rng.choice((0.5, 1.0))
        series = [rng.choice((0.0, 1.0, 2.0, 2.77, 2.79, 5.0, 13.9)) for _ in range(rng.randint(0, 40))]
        mismatches += detect_halts(series, dt) != brute_force_halts(series, dt)
    check("halt oracle", mismatches == 0)
    t = np.arange(0.0, 1800.0)
    noise = np.random.default_rng(0).normal(0, 2, t.size)
    check("capacity flat", capacity_analysis((t, 100 + noise), 450).stable)
    ramp = capacity_analysis((t, 0.05 * t), 450)
    check("capacity ramp", not ramp.stable and abs(ramp.slope - 0.05) <= 1e-9)
    verdict(3, not failures, f"metric examples and 10^4-series halt oracle; {mismatches} halt mismatches; failed {failures or 'none'}")


def test_04_energy_ledger(verdict):
    p = EVParams()
    v = 50 * KMH
    led = EnergyLedger()
    identity_ok = True
    for _ in range(1000):
        accumulate(led, v, 0.0, 1.0, p)
        identity_ok &= led.used == led.output - led.input + led.lost
    closed = (wheel_power(v, 0.0, p) / p.drivetrain_efficiency + p.aux_power) * 1000
    rel = abs(led.used - closed) / closed
    bound_ok = True
    worst = 0.0
    for accel in (1.0, 2.6):
        for brake in (1.0, 2.0, 4.5):
            up = [min(v, accel * k) for k in range(1, int(v / accel) + 2)]
            down = [max(0.0, v - brake * k) for k in range(1, int(v / brake) + 2)]
            cyc = ledger_for_cycle(up + [v] * 10 + down, 1.0, p)
            cap = p.regen_efficiency * 0.5 * p.mass * v**2
            worst = max(worst, cyc.input / cap)
            bound_ok &= 0 < cyc.input <= cap and cyc.used == cyc.output - cyc.input + cyc.lost
    ok = identity_ok and rel <= 1e-6 and bound_ok
    verdict(4, ok, f"identity exact every step; cruise rel err {rel:.2e}; regen max {worst:.3f} of eta_r*KE")


def test_05_poisson_demand(verdict):
    net = network("zonal", 4, 4)
    rate, zones, duration = 150.0, 16, 18000.0
    lam = rate * zones / 3600
    expect = lam * duration
    sigma = math.sqrt(expect)
    within = ks_pass = 0
    for seed in range(1, 21):
        od = build_od_weights(net, seed)
        sched = generate_arrivals(DemandModel(rate, zones, od, duration, seed))
        times = np.array([a.time for a in sched.arrivals])
        within += abs(len(times) - expect) <= 3 * sigma
        gaps = np.diff(np.concatenate(([0.0], times)))
        ks_pass += stats.kstest(gaps, "expon", args=(0, 1 / lam)).pvalue > 0.01
    ok = expect >= 1e4 and within == 20 and ks_pass >= 18
    verdict(5, ok, f"lambda*T={expect:.0f}; counts within 3 sigma {within}/20; KS p>0.01 {ks_pass}/20")


def test_06_engine_safety_and_determinism(verdict, tmp_path):
    base = load_config(CONFIG).with_overrides(rates=(600.0, 600.0, 1.0), rounds=1, duration=900.0, stop_at_saturation=False)
    serial = base.with_overrides(out=tmp_path / "j1", jobs=1)
    parallel = base.with_overrides(out=tmp_path / "j8", jobs=8)
    rs, rp = run_sweep(serial), run_sweep(parallel)
    steps = {}
    neg = 0
    identical = [r.summary for r in rs.results] == [r.summary for r in rp.results]
    for r in rs.results:
        neg += r.summary["counters"]["negative_gaps"]
        steps[r.topology] = int(sum(r.series.present))
        for name in ("trips.csv", "series.csv", "signals.csv", "prolongations.csv", "summary.json"):
            a = run_dir(serial, r.topology, r.rate, r.seed) / name
            b = run_dir(parallel, r.topology, r.rate, r.seed) / name
            identical &= a.read_bytes() == b.read_bytes()
    ok = neg == 0 and identical and all(s >= 1e5 for s in steps.values()) and all(r.ok for r in rs.results + rp.results)
    verdict(6, ok, f"vehicle-steps {steps}; negative gaps {neg}; jobs 1 vs 8 identical {identical}")


def test_07_capacity_ordering(verdict, sweep):
    cfg, result, wall = sweep
    sat = result.saturation
    z, a, s = sat["zonal"], sat["trad-adaptive"], sat["trad-static"]
    ok = None not in (z, a, s) and z > a >= s
    verdict(7, ok, f"saturation rate zonal {z}, trad-adaptive {a}, trad-static {s} veh/h/zone; sweep {wall / 60:.1f} min")


def _stable_for_all(result) -> list[float]:
    stable = {t: {c["rate"] for c in caps if c["stable"]} for t, caps in result.capacity.items()}
    return sorted(set.intersection(*stable.values()))


def test_08_trend_reproduction(verdict, sweep, trends):
    _, result, _ = sweep
    rates = _stable_for_all(result)
    problems = []

    def val(topo, rate, metric, key):
        return float(trends[(topo, rate, metric)][key])

    for r in rates:
        for t in TRADITIONAL:
            if val("zonal", r, "drive_time", "mean") > val(t, r, "drive_time", "mean"):
                problems.append(f"mean drive time @{r:g} vs {t}")
            if val("zonal", r, "drive_time", "iqr") > val(t, r, "drive_time", "iqr"):
                problems.append(f"drive time IQR @{r:g} vs {t}")
            if abs(val("zonal", r, "speed_deviation", "mean")) >= abs(val(t, r, "speed_deviation", "mean")):
                problems.append(f"speed deviation @{r:g} vs {t}")
            if val("zonal", r, "halts", "mean") > val(t, r, "halts", "mean"):
                problems.append(f"halts @{r:g} vs {t}")
    ok = bool(rates) and not problems
    verdict(8, ok, f"stable-for-all rates {[f'{r:g}' for r in rates]}; violations {problems or 'none'}")


def test_09_adaptive_signal_contract(verdict, sweep):
    cfg, result, _ = sweep
    max_green = 0.0
    prolongs = 0
    min_trigger = math.inf
    for r in result.results:
        if r.topology == "zonal":
            continue
        d = run_dir(cfg, r.topology, r.rate, r.seed)
        with open(d / "signals.csv", newline="") as fh:
            max_green = max([max_green] + [float(g["duration"]) for g in csv.DictReader(fh)])
        with open(d / "prolongations.csv", newline="") as fh:
            for p in csv.DictReader(fh):
                prolongs += 1
                min_trigger = min(min_trigger, float(p["trigger_time_loss"]))
    limit = cfg.grid.max_green
    ok = max_green <= limit and prolongs > 0 and min_trigger > cfg.grid.time_loss_threshold
    verdict(9, ok, f"longest green {max_green:g} s (limit {limit:g}); {prolongs} prolongations, smallest trigger loss {min_trigger:.3f} s")


def test_10_nt_bookkeeping(verdict, sweep):
    cfg, result, _ = sweep
    checked = steps = 0
    bad = []
    for r in result.results:
        series = RunSeries.from_csv(run_dir(cfg, r.topology, r.rate, r.seed) / "series.csv")
        p = np.asarray(series.present)
        ins = np.asarray(series.insertions)
        out = np.asarray(series.completions)
        good = p[0] == ins[0] - out[0] and np.array_equal(np.diff(p), ins[1:] - out[1:])
        good &= bool(series.bookkeeping_ok()) and r.summary["bookkeeping_ok"]
        if not good:
            bad.append((r.topology, r.rate, r.seed))
        checked += 1
        steps += len(p)
    verdict(10, not bad and checked > 0, f"{checked} runs, {steps} steps checked; violations {bad or 'none'}")
