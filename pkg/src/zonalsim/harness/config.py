"""Experiment configuration loaded from a single TOML document."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..topogen import GridSpec

TOPOLOGIES = ("zonal", "trad-static", "trad-adaptive")
OUT_ENV = "ZONALSIM_OUT"


def default_out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "runs"))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a sweep.

    ``rates`` is ``(start, stop, step)`` in vehicles/hour/zone with ``stop``
    inclusive. Round ``k`` of every rate uses seed ``base_seed + k``.
    """

    topologies: tuple[str, ...] = TOPOLOGIES
    grid: GridSpec = field(default_factory=lambda: GridSpec(rows=4, cols=4))
    rates: tuple[float, float, float] = (100.0, 400.0, 15.0)
    rounds: int = 4
    base_seed: int = 1
    dt: float = 1.0
    duration: float = 1800.0
    log_sample: int | None = 1000
    hot_pair_count: int = 18
    hot_multiplier: float = 2.0
    sigma: float = 0.0
    warmup_fraction: float = 0.25
    capacity_threshold: float = 0.01
    stop_at_saturation: bool = False
    trajectories: bool = False
    out: Path = field(default_factory=default_out_root)
    jobs: int = 1

    def __post_init__(self):
        for t in self.topologies:
            if t not in TOPOLOGIES:
                raise ValueError(f"unknown topology {t!r}; expected one of {TOPOLOGIES}")
        if not self.topologies:
            raise ValueError("at least one topology is required")
        start, stop, step = self.rates
        if start < 0 or stop < start or not step > 0:
            raise ValueError(f"invalid rate sweep {self.rates}; need 0 <= start <= stop and step > 0")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if not self.dt > 0 or not self.duration > 0:
            raise ValueError("dt and duration must be positive")
        if not 0 <= self.warmup_fraction < 1:
            raise ValueError("warmup_fraction must lie in [0, 1)")
        self.grid.validate()

    @property
    def topology(self) -> str:
        """The single topology of a one-topology config."""
        if len(self.topologies) != 1:
            raise ValueError("config names several topologies")
        return self.topologies[0]

    def rate_list(self) -> list[float]:
        start, stop, step = self.rates
        n = int((stop - start) / step + 1e-9)
        return [round(start + k * step, 9) for k in range(n + 1)]

    def seeds(self) -> list[int]:
        return [self.base_seed + k for k in range(self.rounds)]

    @property
    def warmup(self) -> float:
        return self.warmup_fraction * self.duration

    def semantic_dict(self, topology: str, rate: float, seed: int) -> dict:
        """Inputs that determine the outcome of one run (no paths, no parallelism)."""
        return {
            "topology": topology,
            "rate": float(rate),
            "seed": int(seed),
            "grid": dataclasses.asdict(self.grid),
            "dt": self.dt,
            "duration": self.duration,
            "log_sample": self.log_sample,
            "hot_pair_count": self.hot_pair_count,
            "hot_multiplier": self.hot_multiplier,
            "sigma": self.sigma,
            "warmup_fraction": self.warmup_fraction,
            "capacity_threshold": self.capacity_threshold,
            "trajectories": self.trajectories,
        }

    def fingerprint(self, topology: str, rate: float, seed: int) -> str:
        doc = json.dumps(self.semantic_dict(topology, rate, seed), sort_keys=True)
        return hashlib.sha256(doc.encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> ExperimentConfig:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def parse_rates(text: str) -> tuple[float, float, float]:
    """``"A:B:STEP"`` to a float triple."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"rates must look like A:B:STEP, got {text!r}")
    a, b, s = (float(p) for p in parts)
    return a, b, s


_GRID_FIELDS = {f.name for f in dataclasses.fields(GridSpec)}


def config_from_dict(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    doc = dict(doc)
    grid_doc = dict(doc.pop("grid", {}))
    unknown = set(grid_doc) - _GRID_FIELDS
    if unknown:
        raise ValueError(f"unknown grid keys: {sorted(unknown)}")
    kw: dict = {"grid": GridSpec(**{"rows": 4, "cols": 4, **grid_doc})}
    if "topology" in doc:
        kw["topologies"] = (doc.pop("topology"),)
    if "topologies" in doc:
        kw["topologies"] = tuple(doc.pop("topologies"))
    if "rates" in doc:
        r = doc.pop("rates")
        kw["rates"] = parse_rates(r) if isinstance(r, str) else tuple(float(x) for x in r)
    if "out" in doc:
        out = Path(doc.pop("out"))
        kw["out"] = out if out.is_absolute() or base_dir is None else base_dir / out
    if doc.get("log_sample") == "all":
        doc["log_sample"] = None
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(doc) - names
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kw.update(doc)
    return ExperimentConfig(**kw)


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    with open(p, "rb") as fh:
        doc = tomllib.load(fh)
    return config_from_dict(doc, base_dir=p.parent)
