from __future__ import annotations

from functools import lru_cache

import pytest

from zonalsim.demand import DemandModel, build_od_weights, generate_arrivals
from zonalsim.engine import SimParams, Simulation
from zonalsim.topogen import GridSpec, build_network


@lru_cache(maxsize=None)
def network(topology: str, rows: int, cols: int):
    return build_network(topology, GridSpec(rows=rows, cols=cols))


@lru_cache(maxsize=None)
def finished_run(topology: str, rows: int, rate: float, duration: float, seed: int):
    """A completed simulation shared between tests that only read it."""
    net = network(topology, rows, rows)
    od = build_od_weights(net, seed)
    sched = generate_arrivals(DemandModel(rate, rows * rows, od, duration, seed))
    return Simulation(net, sched, SimParams(log_sample=None), seed=seed).run()


@pytest.fixture
def net_factory():
    return network


@pytest.fixture
def run_factory():
    return finished_run
