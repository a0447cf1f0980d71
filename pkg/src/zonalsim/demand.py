"""Poisson arrivals and weighted origin-destination sampling.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence`` with a
per-purpose spawn key, so the hot-pair draw, the arrival gaps and the OD draws
are independent streams: changing the rate does not move the hot pairs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .netcore import ODPair, RoadNetwork

STREAM_HOT_PAIRS = 1
STREAM_ARRIVALS = 2
STREAM_OD = 3
STREAM_DRIVER = 4
STREAM_SAMPLE = 5


def rng_for(seed: int, stream: int) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, purpose)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(stream,))))


@dataclass(frozen=True)
class ODTable:
    """All eligible directed pairs over a set of spawn edges, stored as index arrays."""

    edges: tuple[str, ...]
    origin: np.ndarray
    destination: np.ndarray
    weight: np.ndarray
    hot: np.ndarray  # indices into the pair arrays

    def __len__(self) -> int:
        return len(self.weight)

    def pairs(self) -> list[ODPair]:
        return [
            ODPair(self.edges[o], self.edges[d], float(w))
            for o, d, w in zip(self.origin, self.destination, self.weight)
        ]

    @property
    def base_weight(self) -> float:
        mask = np.ones(len(self.weight), dtype=bool)
        mask[self.hot] = False
        return float(self.weight[mask][0]) if mask.any() else float(self.weight[0])

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` pair indices proportionally to weight."""
        cdf = np.cumsum(self.weight)
        u = rng.random(n) * cdf[-1]
        return np.searchsorted(cdf, u, side="right")


def build_od_weights(
    net: RoadNetwork,
    seed: int,
    hot_pair_count: int = 18,
    hot_multiplier: float = 2.0,
    base_weight: float = 1.0,
) -> ODTable:
    """Uniform weight over every ordered pair of distinct spawn edges, with a seeded set of hot pairs."""
    edges = tuple(sorted(net.spawn_edges))
    n = len(edges)
    if n < 2:
        raise ValueError(f"network has {n} eligible spawn edges; need at least 2")
    npairs = n * (n - 1)
    if hot_pair_count > npairs:
        raise ValueError(f"hot_pair_count={hot_pair_count} exceeds the {npairs} eligible OD pairs")
    if hot_pair_count < 0:
        raise ValueError("hot_pair_count must be non-negative")
    if not base_weight > 0 or not hot_multiplier > 0:
        raise ValueError("OD weights must be positive")
    idx = np.arange(npairs)
    origin = idx // (n - 1)
    rest = idx % (n - 1)
    destination = rest + (rest >= origin)
    weight = np.full(npairs, float(base_weight))
    hot = np.sort(rng_for(seed, STREAM_HOT_PAIRS).choice(npairs, size=hot_pair_count, replace=False))
    weight[hot] = base_weight * hot_multiplier
    return ODTable(edges, origin, destination, weight, hot)


@dataclass(frozen=True)
class DemandModel:
    rate_per_zone: float
    zone_count: int
    od: ODTable
    duration: float = 7200.0
    seed: int = 0

    def __post_init__(self):
        if self.rate_per_zone < 0:
            raise ValueError("rate_per_zone must be >= 0")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.zone_count < 1:
            raise ValueError("zone_count must be >= 1")

    @property
    def arrival_rate(self) -> float:
        """Network-wide arrivals per second."""
        return self.rate_per_zone * self.zone_count / 3600.0


@dataclass(frozen=True)
class Arrival:
    time: float
    origin: str
    destination: str


@dataclass(frozen=True)
class ArrivalSchedule:
    arrivals: tuple[Arrival, ...]
    duration: float

    def __len__(self) -> int:
        return len(self.arrivals)

    def __iter__(self):
        return iter(self.arrivals)

    def __getitem__(self, i):
        return self.arrivals[i]

    @property
    def times(self) -> np.ndarray:
        return np.array([a.time for a in self.arrivals])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "origin", "destination"])
            for a in self.arrivals:
                w.writerow([repr(a.time), a.origin, a.destination])

    @classmethod
    def from_csv(cls, path: str | Path, duration: float | None = None) -> ArrivalSchedule:
        with open(path, newline="") as fh:
            rows = [Arrival(float(r["time"]), r["origin"], r["destination"]) for r in csv.DictReader(fh)]
        if duration is None:
            duration = (rows[-1].time + 1.0) if rows else 1.0
        return cls(tuple(rows), duration)


def generate_arrivals(dm: DemandModel) -> ArrivalSchedule:
    """Exponential inter-arrival gaps at the network rate; OD per arrival from the weight table."""
    lam = dm.arrival_rate
    if lam == 0:
        return ArrivalSchedule((), dm.duration)
    rng = rng_for(dm.seed, STREAM_ARRIVALS)
    times: list[np.ndarray] = []
    t = 0.0
    # draw in blocks; expected count plus slack keeps this to one or two draws
    block = max(16, int(lam * dm.duration * 1.1) + 16)
    while True:
        gaps = rng.exponential(1.0 / lam, size=block)
        cum = t + np.cumsum(gaps)
        inside = cum[cum < dm.duration]
        times.append(inside)
        if len(inside) < block:
            break
        t = float(cum[-1])
    arr = np.concatenate(times)
    picks = dm.od.sample(rng_for(dm.seed, STREAM_OD), len(arr))
    edges = dm.od.edges
    o = dm.od.origin[picks]
    d = dm.od.destination[picks]
    return ArrivalSchedule(
        tuple(Arrival(float(tt), edges[a], edges[b]) for tt, a, b in zip(arr, o, d)),
        dm.duration,
    )
