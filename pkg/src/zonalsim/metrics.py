"""Per-vehicle and per-run metrics: progress rate, speed deviation, halts, N(t) capacity."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .energy import EnergyLedger, EVParams, accumulate
from .netcore import RoadNetwork, polyline_point

HALT_SPEED = 10 / 3.6
HALT_WINDOW = 2.0


def progress_rate_sample(v_vec, pos, dest, v_max: float) -> float:
    """Normalised velocity projected on the unit vector toward the destination."""
    if not v_max > 0:
        raise ValueError("v_max must be positive")
    dx = dest[0] - pos[0]
    dy = dest[1] - pos[1]
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return 0.0
    rho = (v_vec[0] * dx + v_vec[1] * dy) / (dist * v_max)
    return min(1.0, max(-1.0, rho))


def speed_deviation_sample(v: float, v_max: float) -> float:
    if not v_max > 0:
        raise ValueError("v_max must be positive")
    return (v - v_max) / v_max


def detect_halts(speeds: Sequence[float], dt: float, v_halt: float = HALT_SPEED, window: float = HALT_WINDOW) -> int:
    """Number of maximal runs with speed below ``v_halt`` lasting at least ``window`` seconds.

    A run of ``k`` consecutive samples spans ``k * dt`` seconds.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    need = max(1, math.ceil(window / dt - 1e-9))
    halts = 0
    run = 0
    for v in speeds:
        if v < v_halt:
            run += 1
            if run == need:
                halts += 1
        else:
            run = 0
    return halts


class HaltTracker:
    """Streaming version of :func:`detect_halts` for use inside the step loop."""

    __slots__ = ("need", "v_halt", "run", "count")

    def __init__(self, dt: float, v_halt: float = HALT_SPEED, window: float = HALT_WINDOW):
        self.need = max(1, math.ceil(window / dt - 1e-9))
        self.v_halt = v_halt
        self.run = 0
        self.count = 0

    def update(self, v: float) -> bool:
        """Feed one sample; True when this sample completes a new halt."""
        if v < self.v_halt:
            self.run += 1
            if self.run == self.need:
                self.count += 1
                return True
        else:
            self.run = 0
        return False


# ---------------------------------------------------------------------------
# records


@dataclass
class TripRecord:
    vehicle_id: int
    origin: str
    destination: str
    spawn_time: float
    insert_time: float
    finish_time: float
    drive_time: float
    distance: float
    energy_used: float
    energy_output: float
    energy_input: float
    energy_lost: float
    mean_progress_rate: float
    mean_speed_deviation: float
    halts: int
    time_loss: float
    completed: bool

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def write_trips_csv(records: Iterable[TripRecord], path: str | Path) -> None:
    cols = TripRecord.columns()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in cols])


def read_trips_csv(path: str | Path) -> list[TripRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                TripRecord(
                    vehicle_id=int(row["vehicle_id"]),
                    origin=row["origin"],
                    destination=row["destination"],
                    spawn_time=float(row["spawn_time"]),
                    insert_time=float(row["insert_time"]),
                    finish_time=float(row["finish_time"]),
                    drive_time=float(row["drive_time"]),
                    distance=float(row["distance"]),
                    energy_used=float(row["energy_used"]),
                    energy_output=float(row["energy_output"]),
                    energy_input=float(row["energy_input"]),
                    energy_lost=float(row["energy_lost"]),
                    mean_progress_rate=float(row["mean_progress_rate"]),
                    mean_speed_deviation=float(row["mean_speed_deviation"]),
                    halts=int(row["halts"]),
                    time_loss=float(row["time_loss"]),
                    completed=row["completed"] in ("1", "True", "true"),
                )
            )
    return out


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


@dataclass
class RunSeries:
    """Per-step bookkeeping; index k describes the state after step k."""

    dt: float
    time: list[float] = field(default_factory=list)
    present: list[int] = field(default_factory=list)
    insertions: list[int] = field(default_factory=list)
    completions: list[int] = field(default_factory=list)
    queued: list[int] = field(default_factory=list)

    def append(self, t: float, present: int, inserted: int, completed: int, queued: int) -> None:
        self.time.append(t)
        self.present.append(present)
        self.insertions.append(inserted)
        self.completions.append(completed)
        self.queued.append(queued)

    def __len__(self) -> int:
        return len(self.time)

    def bookkeeping_ok(self) -> bool:
        prev = 0
        for n, i, c in zip(self.present, self.insertions, self.completions):
            if n < 0 or n - prev != i - c:
                return False
            prev = n
        return True

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "present", "insertions", "completions", "queued"])
            for row in zip(self.time, self.present, self.insertions, self.completions, self.queued):
                w.writerow([repr(row[0]), *row[1:]])

    @classmethod
    def from_csv(cls, path: str | Path, dt: float | None = None) -> RunSeries:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if dt is None:
            dt = float(rows[1]["time"]) - float(rows[0]["time"]) if len(rows) > 1 else 1.0
        s = cls(dt)
        for r in rows:
            s.append(float(r["time"]), int(r["present"]), int(r["insertions"]), int(r["completions"]), int(r["queued"]))
        return s


@dataclass(frozen=True)
class CapacityVerdict:
    stable: bool
    slope: float
    threshold: float

    @property
    def label(self) -> str:
        return "stable" if self.stable else "unstable"


def capacity_analysis(
    series: RunSeries | tuple[Sequence[float], Sequence[float]],
    warmup: float,
    threshold: float = 0.01,
    include_queued: bool = True,
) -> CapacityVerdict:
    """Least-squares slope of vehicle count after ``warmup``; unstable above ``threshold`` veh/s.

    With ``include_queued`` the count also covers vehicles waiting to be inserted,
    since a saturated network pushes its backlog onto the origin queues.
    ``series`` may also be a plain ``(times, counts)`` pair.
    """
    if isinstance(series, RunSeries):
        t = np.asarray(series.time, dtype=float)
        n = np.asarray(series.present, dtype=float)
        if include_queued:
            n = n + np.asarray(series.queued, dtype=float)
    else:
        t = np.asarray(series[0], dtype=float)
        n = np.asarray(series[1], dtype=float)
    if len(t) == 0 or t[-1] <= warmup:
        raise ValueError(f"series of length {t[-1] if len(t) else 0} s is not longer than warmup {warmup} s")
    mask = t > warmup
    if mask.sum() < 2:
        raise ValueError("fewer than two samples after warmup")
    tt = t[mask]
    nn = n[mask]
    tc = tt - tt.mean()
    denom = float(np.dot(tc, tc))
    slope = float(np.dot(tc, nn - nn.mean()) / denom) if denom > 0 else 0.0
    return CapacityVerdict(stable=slope <= threshold, slope=slope, threshold=threshold)


# ---------------------------------------------------------------------------
# aggregation


def quantiles(values: Sequence[float]) -> dict[str, float]:
    """Mean, median, quartiles and IQR with linear interpolation between order statistics."""
    a = np.asarray(values, dtype=float)
    q1, med, q3 = np.quantile(a, [0.25, 0.5, 0.75], method="linear")
    return {
        "mean": float(a.sum() / len(a)),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "iqr": float(q3 - q1),
        "min": float(a.min()),
        "max": float(a.max()),
    }


AGG_FIELDS = {
    "drive_time": "drive_time",
    "distance": "distance",
    "energy_used": "energy_used",
    "progress_rate": "mean_progress_rate",
    "speed_deviation": "mean_speed_deviation",
}


def aggregate(records: Sequence[TripRecord], completed_only: bool = True) -> dict:
    """Summary statistics over trip records.

    Trip-scale quantities (drive time, distance, energy) use completed trips when
    ``completed_only``; progress rate and speed deviation are reported both over
    completed trips and over every record.
    """
    if not records:
        raise ValueError("aggregate needs at least one record")
    done = [r for r in records if r.completed]
    base = done if (completed_only and done) else list(records)
    out: dict = {
        "count": len(records),
        "completed": len(done),
        "completion_fraction": len(done) / len(records),
        "total_halts": int(sum(r.halts for r in records)),
        "mean_halts": float(sum(r.halts for r in records) / len(records)),
    }
    for key, attr in AGG_FIELDS.items():
        out[key] = quantiles([getattr(r, attr) for r in base])
    out["progress_rate_all"] = quantiles([r.mean_progress_rate for r in records])
    out["speed_deviation_all"] = quantiles([r.mean_speed_deviation for r in records])
    out["completed_only"] = bool(completed_only and done)
    return out


def summary_json(summary: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary, indent=1, sort_keys=True))


def trip_dict(r: TripRecord) -> dict:
    return asdict(r)


# ---------------------------------------------------------------------------
# trajectory logs

TRAJECTORY_COLUMNS = ("step", "time", "vehicle_id", "edge", "lane", "offset", "speed", "accel")


def write_trajectory_csv(rows: Iterable[tuple], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def read_trajectory_csv(path: str | Path) -> list[tuple]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                (
                    int(row["step"]),
                    float(row["time"]),
                    int(row["vehicle_id"]),
                    row["edge"],
                    int(row["lane"]),
                    float(row["offset"]),
                    float(row["speed"]),
                    float(row["accel"]),
                )
            )
    return out


def recompute_from_trajectory(
    rows: Iterable[tuple],
    net: RoadNetwork,
    destinations: dict[int, str],
    dt: float,
    ev: EVParams | None = None,
) -> dict[int, dict]:
    """Rebuild per-vehicle metrics from a trajectory log.

    Each row holds the position at the start of a step together with the speed
    adopted for that step and the acceleration that produced it, which is the
    same sampling the simulator uses while accumulating.
    """
    ev = ev or EVParams()
    acc: dict[int, dict] = {}
    for _step, _t, vid, edge, _lane, offset, v, a in sorted(rows, key=lambda r: (r[2], r[0])):
        e = net.edges[edge]
        limit = e.speed_limit
        st = acc.get(vid)
        if st is None:
            st = acc[vid] = {
                "samples": 0,
                "pr_sum": 0.0,
                "sd_sum": 0.0,
                "time_loss": 0.0,
                "speeds": [],
                "ledger": EnergyLedger(),
            }
        (x, y), (tx, ty) = polyline_point(e.geometry, offset)
        dest = net.edges[destinations[vid]].geometry[-1]
        st["pr_sum"] += progress_rate_sample((v * tx, v * ty), (x, y), dest, limit)
        st["sd_sum"] += speed_deviation_sample(v, limit)
        st["time_loss"] += dt * max(0.0, 1.0 - v / limit)
        st["samples"] += 1
        st["speeds"].append(v)
        accumulate(st["ledger"], v - 0.5 * a * dt, a, dt, ev)
    out = {}
    for vid, st in acc.items():
        n = st["samples"]
        led = st["ledger"]
        out[vid] = {
            "mean_progress_rate": st["pr_sum"] / n,
            "mean_speed_deviation": st["sd_sum"] / n,
            "time_loss": st["time_loss"],
            "halts": detect_halts(st["speeds"], dt),
            "energy_used": led.used,
            "energy_output": led.output,
            "energy_input": led.input,
            "energy_lost": led.lost,
            "samples": n,
        }
    return out
