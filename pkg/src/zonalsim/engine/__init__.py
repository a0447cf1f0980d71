"""Discrete-time microscopic simulation engine."""

from .carfollow import CarFollowingParams, commanded_speed, safe_speed
from .merge import MergeZone, merge_arbitrate
from .signals import GreenRecord, ProlongRecord, SignalController, update_adaptive_signal
from .sim import SimParams, Simulation, SimulationError, VehicleState, insert_vehicle, make_vehicle, step

__all__ = [
    "CarFollowingParams",
    "GreenRecord",
    "MergeZone",
    "ProlongRecord",
    "SignalController",
    "SimParams",
    "Simulation",
    "SimulationError",
    "VehicleState",
    "commanded_speed",
    "insert_vehicle",
    "make_vehicle",
    "merge_arbitrate",
    "safe_speed",
    "step",
    "update_adaptive_signal",
]
