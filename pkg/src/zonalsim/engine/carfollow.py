"""Krauss car-following: the largest speed that still lets the follower stop behind a braking leader."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CarFollowingParams:
    max_accel: float = 2.6
    max_decel: float = 4.5
    min_gap: float = 2.5
    tau: float = 1.0
    sigma: float = 0.0
    length: float = 5.0

    def __post_init__(self):
        for name in ("max_accel", "max_decel", "min_gap", "tau", "length"):
            if not getattr(self, name) > 0:
                raise ValueError(f"CarFollowingParams.{name} must be positive")
        if not 0 <= self.sigma <= 1:
            raise ValueError("sigma must lie in [0, 1]")


def safe_speed(leader_speed: float, gap: float, follower_speed: float, p: CarFollowingParams) -> float:
    """v_safe = v_l + (g - v_l*tau) / (tau + (v_l + v_f) / (2 b)).

    ``gap`` is the bumper-to-bumper distance already reduced by ``min_gap``.
    """
    return leader_speed + (gap - leader_speed * p.tau) / (p.tau + (leader_speed + follower_speed) / (2.0 * p.max_decel))


def commanded_speed(
    v: float,
    v_safe: float,
    speed_limit: float,
    p: CarFollowingParams,
    dt: float = 1.0,
    rng: np.random.Generator | None = None,
) -> float:
    """max(0, min(v_safe, v + a*dt, limit)), less a sigma-scaled random dawdle when sigma > 0."""
    v_cmd = min(v_safe, v + p.max_accel * dt, speed_limit)
    if p.sigma > 0 and rng is not None:
        v_cmd -= p.sigma * p.max_accel * dt * rng.random()
    return max(0.0, v_cmd)


def brake_gap(v: float, b: float, dt: float) -> float:
    """Distance covered while braking from ``v`` to 0 at ``b`` with explicit-Euler position updates."""
    if v <= 0:
        return 0.0
    n = int(v / (b * dt))
    return dt * (n * v - b * dt * n * (n + 1) / 2.0)


def euler_safe_speed(gap: float, leader_speed: float, b: float, dt: float) -> float:
    """Largest v with v*dt + brake_gap(v) <= gap + brake_gap(leader_speed).

    The Krauss formula alone can demand more than ``b`` on the following step
    when updates are discrete; this bound keeps a stop possible at every step.
    """
    room = gap + brake_gap(leader_speed, b, dt)
    if room <= 0:
        return 0.0
    bdt = b * dt
    n = 0
    while True:
        # with n braking steps after this one: room = dt*((n+1) v - b dt n(n+1)/2)
        v = (room / dt + bdt * dt * n * (n + 1) / 2.0) / (n + 1)
        if v < (n + 1) * bdt or n > 10_000:
            return max(v, n * bdt)
        n += 1


def follow_speed(leader_speed: float, gap: float, v: float, p: CarFollowingParams, dt: float = 1.0) -> float:
    """Engine speed bound behind a leader: Krauss, tightened by the discrete stopping bound."""
    vs = safe_speed(leader_speed, gap, v, p)
    ve = euler_safe_speed(gap, leader_speed, p.max_decel, dt)
    return vs if vs < ve else ve
