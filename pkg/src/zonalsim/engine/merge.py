"""Zipper arbitration for crossover merges."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from ..netcore import MergeZoneSpec


@dataclass
class MergeZone:
    """Runtime state of one zipper: which feeder was granted last, plus a grant log."""

    id: str
    entries: tuple[str, str]
    exits: tuple[str, str] = ()
    last: str | None = None
    grants: list[tuple[float, int, str]] = field(default_factory=list)

    @classmethod
    def from_spec(cls, spec: MergeZoneSpec) -> MergeZone:
        return cls(spec.id, tuple(spec.entries), tuple(spec.exits))

    def order(self, waiting: list[str]) -> list[str]:
        """Grant order among feeders that currently have a waiting vehicle.

        With both feeders waiting, the one not granted last goes first, which
        makes consecutive grants alternate.
        """
        present = [e for e in self.entries if e in waiting]
        if len(present) < 2 or self.last is None:
            return present
        return sorted(present, key=lambda e: e == self.last)

    def record(self, t: float, vehicle_id: int, feeder: str) -> None:
        self.last = feeder
        self.grants.append((t, vehicle_id, feeder))


def merge_arbitrate(zone: MergeZone, waiting: dict[str, deque], t: float = 0.0) -> list[tuple[str, object]]:
    """One arbitration round: grant the head of each waiting feeder queue in zipper order.

    ``waiting`` maps feeder id to a queue of vehicles (anything with an ``id``
    attribute, or plain ids). Granted heads are popped.
    """
    out = []
    for feeder in zone.order([f for f, q in waiting.items() if q]):
        item = waiting[feeder].popleft()
        zone.record(t, getattr(item, "id", item), feeder)
        out.append((feeder, item))
    return out
