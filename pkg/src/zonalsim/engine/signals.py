"""Runtime signal controllers: fixed-time programs and delay-based green extension."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from ..netcore import SignalProgram

GREEN = "green"
YELLOW = "yellow"
ALL_RED = "all-red"

_EPS = 1e-9


@dataclass(frozen=True)
class GreenRecord:
    controller: str
    phase: int
    start: float
    duration: float
    prolonged: int


@dataclass(frozen=True)
class ProlongRecord:
    controller: str
    time: float
    phase: int
    green_elapsed: float
    trigger_time_loss: float


@dataclass
class SignalController:
    """Phase state machine for one junction.

    ``elapsed`` counts seconds spent in the current stage. In adaptive mode a
    green that reaches its nominal length is extended one step at a time while
    some approaching vehicle has accumulated more than ``time_loss_threshold``
    seconds of time loss, never beyond ``max_green``.
    """

    program: SignalProgram
    phase: int = 0
    stage: str = GREEN
    elapsed: float = 0.0
    green_start: float = 0.0
    prolonged: int = 0
    green_log: list[GreenRecord] = field(default_factory=list)
    prolong_log: list[ProlongRecord] = field(default_factory=list)

    def __post_init__(self):
        for ph in self.program.phases:
            if not ph.green > 0 or ph.yellow < 0 or ph.all_red < 0:
                raise ValueError(f"{self.program.id}: phase durations must be positive")
        if self.program.mode not in ("static", "adaptive"):
            raise ValueError(f"unknown signal mode {self.program.mode!r}")
        self.link_phase = {(a, b): k for a, b, k in self.program.links}

    @property
    def id(self) -> str:
        return self.program.id

    @property
    def mode(self) -> str:
        return self.program.mode

    @property
    def adaptive(self) -> bool:
        return self.program.mode == "adaptive"

    def allows(self, in_edge: str, out_edge: str) -> bool:
        return self.stage == GREEN and self.link_phase.get((in_edge, out_edge)) == self.phase

    def wants_demand(self, dt: float) -> bool:
        """True when the next ``advance`` will need the approach time loss."""
        return self.adaptive and self.stage == GREEN and self.elapsed + dt >= self.program.phases[self.phase].green - _EPS

    def advance(self, t: float, dt: float, approach_time_loss: float = 0.0) -> int | None:
        """Move the clock to ``t + dt``. Returns the phase index whose green just ended, if any."""
        ph = self.program.phases[self.phase]
        self.elapsed += dt
        if self.stage == GREEN:
            if self.elapsed < ph.green - _EPS:
                return None
            if (
                self.adaptive
                and self.elapsed < self.program.max_green - _EPS
                and approach_time_loss > self.program.time_loss_threshold
            ):
                self.prolonged += 1
                self.prolong_log.append(ProlongRecord(self.id, t + dt, self.phase, self.elapsed, approach_time_loss))
                return None
            ended = self.phase
            self._close_green()
            self.stage, self.elapsed = YELLOW, 0.0
            if ph.yellow <= 0:
                self._after_yellow(t + dt)
            return ended
        if self.stage == YELLOW and self.elapsed >= ph.yellow - _EPS:
            self._after_yellow(t + dt)
        elif self.stage == ALL_RED and self.elapsed >= ph.all_red - _EPS:
            self._next_green(t + dt)
        return None

    def green_elapsed(self) -> float:
        return self.elapsed if self.stage == GREEN else 0.0

    def finish(self) -> None:
        """Close an open green interval at the end of a run."""
        if self.stage == GREEN and self.elapsed > 0:
            self._close_green()

    def _close_green(self) -> None:
        self.green_log.append(GreenRecord(self.id, self.phase, self.green_start, self.elapsed, self.prolonged))

    def _after_yellow(self, now: float) -> None:
        if self.program.phases[self.phase].all_red > 0:
            self.stage, self.elapsed = ALL_RED, 0.0
        else:
            self._next_green(now)

    def _next_green(self, now: float) -> None:
        self.phase = (self.phase + 1) % len(self.program.phases)
        self.stage, self.elapsed = GREEN, 0.0
        self.green_start = now
        self.prolonged = 0


def update_adaptive_signal(ctrl: SignalController, approaching: Iterable, dt: float, t: float = 0.0) -> SignalController:
    """Advance an adaptive controller one step given the vehicles approaching its green movements.

    Each item needs an ``accumulated_time_loss`` attribute.
    """
    if not ctrl.adaptive:
        raise ValueError(f"{ctrl.id} is not adaptive")
    loss = max((v.accumulated_time_loss for v in approaching), default=0.0)
    ctrl.advance(t, dt, loss)
    return ctrl
