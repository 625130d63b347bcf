"""Deterministic TadBot firmware state machine.

The device runs one of two burst programs -- swimming (8 Hz carrier) or
begging (16 Hz carrier), both shaped 15 s on / 10 s off repeated three
times -- on a virtual tick clock, and enforces the tendon-tension
interlock. States are immutable; every operation returns a new state, so
identical command sequences always produce bit-identical trajectories.

Exactly one logical owner should advance a given device's state; states
may be handed between threads but never shared mutably.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

ON_SECONDS = 15.0
OFF_SECONDS = 10.0
BURST_REPEATS = 3
SCHEDULE_SPAN_S = (ON_SECONDS + OFF_SECONDS) * BURST_REPEATS  # 75 s


class Mode(enum.Enum):
    IDLE = "idle"
    SWIMMING = "swimming"
    BEGGING = "begging"


CARRIER_HZ = {Mode.SWIMMING: 8.0, Mode.BEGGING: 16.0}


class InterlockError(RuntimeError):
    """Tendon tension request above the sleeve buckling limit."""


@dataclass(frozen=True)
class BurstSchedule:
    """Ordered (freq_hz, duration_s) segments anchored at a start time."""

    segments: tuple[tuple[float, float], ...]
    started_at: float

    @classmethod
    def for_mode(cls, mode: Mode, started_at: float) -> "BurstSchedule":
        carrier = CARRIER_HZ[mode]
        cycle = ((carrier, ON_SECONDS), (0.0, OFF_SECONDS))
        return cls(segments=cycle * BURST_REPEATS, started_at=started_at)

    @property
    def total_s(self) -> float:
        return sum(d for _, d in self.segments)

    def freq_at(self, offset_s: float) -> float | None:
        """Segment frequency at an offset from the anchor; None once expired."""
        if offset_s < 0:
            return 0.0  # anchored in the future: quiet until it starts
        acc = 0.0
        for freq, dur in self.segments:
            acc += dur
            if offset_s < acc:
                return freq
        return None


@dataclass(frozen=True)
class DeviceState:
    """TadBot runtime snapshot: mode, schedule position, tension, clock."""

    device_id: str
    mode: Mode = Mode.IDLE
    schedule: BurstSchedule | None = None
    tension_n: float = 0.0
    clock_s: float = 0.0
    tick_s: float = 0.01
    tension_limit_n: float = 2.0

    def __post_init__(self) -> None:
        if self.tick_s <= 0:
            raise ValueError(f"tick_s must be > 0, got {self.tick_s}")
        if not 0 <= self.tension_n <= self.tension_limit_n:
            raise ValueError(
                f"tension {self.tension_n} N outside [0, {self.tension_limit_n}] N")
        if (self.schedule is not None) != (self.mode is not Mode.IDLE):
            raise ValueError("schedule must be present iff mode is not IDLE")


def activate_mode(state: DeviceState, mode: Mode, now: float | None = None) -> DeviceState:
    """Start (or restart) a burst schedule in the given mode.

    Re-activation during a running schedule restarts it, anchored at `now`
    (defaults to the device clock): an experimenter re-pressing the button
    expects immediate effect.
    """
    if mode not in (Mode.SWIMMING, Mode.BEGGING):
        raise ValueError(f"cannot activate mode {mode}; use stop() to go idle")
    if state.tension_n > state.tension_limit_n:
        raise InterlockError(
            f"tension {state.tension_n} N exceeds limit {state.tension_limit_n} N")
    anchor = state.clock_s if now is None else now
    return replace(state, mode=mode, schedule=BurstSchedule.for_mode(mode, anchor))


def tick(state: DeviceState) -> tuple[DeviceState, float]:
    """Advance the clock one tick and return (new state, setpoint in Hz).

    The setpoint is the scheduled segment frequency at the post-tick
    offset: 0 in off segments and when idle. Once the offset reaches the
    75 s span the device reverts to IDLE and the schedule clears.
    """
    clock = state.clock_s + state.tick_s
    if state.schedule is None:
        return replace(state, clock_s=clock), 0.0
    freq = state.schedule.freq_at(clock - state.schedule.started_at)
    if freq is None:
        return replace(state, clock_s=clock, mode=Mode.IDLE, schedule=None), 0.0
    return replace(state, clock_s=clock), freq


def set_tension(state: DeviceState, tension_n: float) -> DeviceState:
    """Store a tendon pre-tension if it respects the buckling interlock."""
    if tension_n < 0:
        raise ValueError(f"tension must be >= 0, got {tension_n}")
    if tension_n > state.tension_limit_n:
        raise InterlockError(
            f"tension {tension_n} N exceeds buckling limit {state.tension_limit_n} N")
    return replace(state, tension_n=tension_n)


def stop(state: DeviceState) -> DeviceState:
    """Return to IDLE, clearing any schedule. Idempotent."""
    if state.mode is Mode.IDLE:
        return state
    return replace(state, mode=Mode.IDLE, schedule=None)


def current_setpoint(state: DeviceState) -> float:
    """Setpoint at the state's current clock without advancing it."""
    if state.schedule is None:
        return 0.0
    freq = state.schedule.freq_at(state.clock_s - state.schedule.started_at)
    return 0.0 if freq is None else freq


def remaining_s(state: DeviceState) -> float:
    """Seconds left in the running schedule, 0 when idle."""
    if state.schedule is None:
        return 0.0
    left = state.schedule.total_s - (state.clock_s - state.schedule.started_at)
    return max(0.0, left)
