"""Longitudinal EV energy model.

Road-load power at the wheel is split into battery-side drive energy, recovered
regenerative energy and auxiliary draw, so that

    used = output - input + lost

holds exactly for every accumulated step. Turning losses are not modelled.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class EVParams:
    mass: float = 1600.0
    drag_coefficient: float = 0.30
    frontal_area: float = 2.3
    rolling_resistance: float = 0.012
    air_density: float = 1.225
    gravity: float = 9.81
    drivetrain_efficiency: float = 0.90
    regen_efficiency: float = 0.65
    aux_power: float = 300.0

    def __post_init__(self):
        for name in ("mass", "drag_coefficient", "frontal_area", "rolling_resistance", "air_density", "gravity"):
            if not getattr(self, name) > 0:
                raise ValueError(f"EVParams.{name} must be positive")
        if not 0 < self.drivetrain_efficiency <= 1:
            raise ValueError("drivetrain_efficiency must lie in (0, 1]")
        if not 0 <= self.regen_efficiency <= 1:
            raise ValueError("regen_efficiency must lie in [0, 1]")
        if self.aux_power < 0:
            raise ValueError("aux_power must be non-negative")


@dataclass
class EnergyLedger:
    output: float = 0.0
    input: float = 0.0
    lost: float = 0.0
    used: float = 0.0

    def to_dict(self) -> dict:
        return {"E_Output": self.output, "E_Input": self.input, "E_Lost": self.lost, "E_Used": self.used}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def wheel_power(v: float, a: float, p: EVParams) -> float:
    """Tractive power (W) needed at speed ``v`` with acceleration ``a``; negative when braking."""
    if v < 0:
        raise ValueError("speed must be non-negative")
    rolling = p.mass * p.gravity * p.rolling_resistance if v > 0 else 0.0
    drag = 0.5 * p.air_density * p.drag_coefficient * p.frontal_area * v * v
    return (p.mass * a + rolling + drag) * v


def accumulate(ledger: EnergyLedger, v: float, a: float, dt: float, p: EVParams) -> EnergyLedger:
    """Add one step of length ``dt`` at speed ``v`` and acceleration ``a`` to ``ledger`` (in place)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    power = wheel_power(v, a, p)
    if power >= 0:
        ledger.output += power / p.drivetrain_efficiency * dt
    else:
        ledger.input += -power * p.regen_efficiency * dt
    ledger.lost += p.aux_power * dt
    ledger.used = ledger.output - ledger.input + ledger.lost
    return ledger


def step_power_args(v_old: float, v_new: float, dt: float) -> tuple[float, float]:
    """Speed and acceleration to charge for a step from ``v_old`` to ``v_new``.

    The mid-step speed makes the inertial term equal the exact kinetic-energy
    change, so braking can never recover more than the vehicle carried.
    """
    return 0.5 * (v_old + v_new), (v_new - v_old) / dt


def ledger_for_cycle(speeds, dt: float, p: EVParams | None = None, v0: float = 0.0) -> EnergyLedger:
    """Energy of a sampled speed trace; ``speeds[k]`` is the speed at the end of step k."""
    p = p or EVParams()
    ledger = EnergyLedger()
    prev = v0
    for v in speeds:
        vm, a = step_power_args(prev, float(v), dt)
        accumulate(ledger, vm, a, dt, p)
        prev = float(v)
    return ledger


def read_drive_cycle(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``time,speed`` CSV (seconds, m/s)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    t = np.array([float(r["time"]) for r in rows])
    v = np.array([float(r["speed"]) for r in rows])
    return t, v


def score_drive_cycle(path: str | Path, p: EVParams | None = None) -> EnergyLedger:
    """Ledger for an external drive cycle; the first sample sets the initial speed."""
    t, v = read_drive_cycle(path)
    if len(t) < 2:
        return EnergyLedger()
    dts = np.diff(t)
    if np.any(dts <= 0):
        raise ValueError("drive-cycle times must be strictly increasing")
    p = p or EVParams()
    ledger = EnergyLedger()
    for k in range(1, len(t)):
        vm, a = step_power_args(v[k - 1], v[k], dts[k - 1])
        accumulate(ledger, vm, a, dts[k - 1], p)
    return ledger


def params_dict(p: EVParams) -> dict:
    return asdict(p)
