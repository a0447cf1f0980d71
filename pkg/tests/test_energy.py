from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zonalsim.energy import (
    EnergyLedger,
    EVParams,
    accumulate,
    ledger_for_cycle,
    score_drive_cycle,
    step_power_args,
    wheel_power,
)

P = EVParams()
V50 = 13.89


def test_wheel_power_at_rest():
    assert wheel_power(0.0, 0.0, P) == 0.0


def test_wheel_power_cruise_oracle():
    expected = (1600 * 9.81 * 0.012 + 0.5 * 1.225 * 0.3 * 2.3 * V50**2) * V50
    assert wheel_power(V50, 0.0, P) == pytest.approx(expected, rel=1e-12)
    assert wheel_power(V50, 0.0, P) == pytest.approx(3740, rel=0.01)


def test_hard_braking_is_negative():
    assert wheel_power(10.0, -4.5, P) < 0


def test_negative_speed_rejected():
    with pytest.raises(ValueError):
        wheel_power(-1.0, 0.0, P)


@pytest.mark.parametrize(
    "kw", [{"mass": 0}, {"drivetrain_efficiency": 1.5}, {"regen_efficiency": -0.1}, {"aux_power": -1}]
)
def test_params_validated(kw):
    with pytest.raises(ValueError):
        EVParams(**kw)


def test_stationary_is_pure_aux():
    led = EnergyLedger()
    for _ in range(100):
        accumulate(led, 0.0, 0.0, 1.0, P)
    assert led.used == pytest.approx(30_000.0, rel=1e-12)
    assert led.output == 0 and led.input == 0 and led.lost == led.used


def test_constant_cruise_closed_form():
    led = EnergyLedger()
    for _ in range(1000):
        accumulate(led, V50, 0.0, 1.0, P)
    closed = (wheel_power(V50, 0.0, P) / 0.9 + 300.0) * 1000
    assert led.used == pytest.approx(closed, rel=1e-6)
    assert led.used == pytest.approx(4.45e6, rel=0.01)


def test_regen_bound_on_stop_from_speed():
    accel = [min(V50, 2.6 * k) for k in range(1, 8)]
    brake = [max(0.0, V50 - 4.5 * k) for k in range(1, 5)]
    speeds = accel + [V50] * 5 + brake
    led = ledger_for_cycle(speeds, 1.0, P)
    assert 0 < led.input <= P.regen_efficiency * 0.5 * P.mass * V50**2


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 20), min_size=1, max_size=60), st.sampled_from([0.5, 1.0]))
def test_identity_and_monotonicity(speeds, dt):
    led = EnergyLedger()
    prev = 0.0
    last = (0.0, 0.0, 0.0)
    for v in speeds:
        vm, a = step_power_args(prev, v, dt)
        accumulate(led, vm, a, dt, P)
        assert led.used == led.output - led.input + led.lost
        assert led.output >= last[0] and led.input >= last[1] and led.lost >= last[2]
        last = (led.output, led.input, led.lost)
        prev = v


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 20), min_size=1, max_size=40))
def test_doubling_aux_adds_aux_times_duration(speeds):
    base = ledger_for_cycle(speeds, 1.0, P)
    double = ledger_for_cycle(speeds, 1.0, EVParams(aux_power=600.0))
    assert double.used - base.used == pytest.approx(300.0 * len(speeds), rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(1, 20), st.integers(1, 10))
def test_regen_never_exceeds_kinetic(v0, n):
    # brake from v0 to rest in n steps
    speeds = list(np.linspace(v0, 0, n + 1)[1:])
    led = ledger_for_cycle(speeds, 1.0, P, v0=v0)
    assert led.input <= P.regen_efficiency * 0.5 * P.mass * v0**2 + 1e-9


def test_zero_length_trip():
    assert ledger_for_cycle([], 1.0).used == 0.0


def test_dt_must_be_positive():
    with pytest.raises(ValueError):
        accumulate(EnergyLedger(), 1.0, 0.0, 0.0, P)


def test_drive_cycle_csv(tmp_path):
    path = tmp_path / "cycle.csv"
    path.write_text("time,speed\n0,0\n1,2\n2,4\n3,4\n4,0\n")
    led = score_drive_cycle(path)
    ref = ledger_for_cycle([2, 4, 4, 0], 1.0)
    assert led == ref
    assert set(json.loads(led.to_json())) == {"E_Output", "E_Input", "E_Lost", "E_Used"}


def test_drive_cycle_rejects_unordered_time(tmp_path):
    path = tmp_path / "cycle.csv"
    path.write_text("time,speed\n0,0\n1,2\n1,4\n")
    with pytest.raises(ValueError):
        score_drive_cycle(path)
