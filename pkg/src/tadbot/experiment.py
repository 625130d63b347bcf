"""Randomized three-stimulus trial scheduling and care-event logging.

A parenting pair is exposed, in seeded-random order, to a cross-fostered
live tadpole (positive control), an unactuated robot (negative control)
and an actuated robot (experimental group), two weeks per stimulus. Care
observations accumulate in an append-only per-trial log with monotone
timestamps; summaries bucket them by phase. A guard keeps activation
commands out of the control phases.

Phase intervals are half-open [start, end) civil dates, so a boundary
midnight belongs to the later phase.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Iterator

from .protocol import format_timestamp, parse_timestamp
from .runtime import Mode

PHASE_DAYS = 14
TRIAL_DAYS = PHASE_DAYS * 3

EVENTS_CSV_HEADER = ["ts", "trial_id", "phase", "kind", "payload"]

_MASK64 = (1 << 64) - 1


class Stimulus(enum.Enum):
    LIVE_CROSS_FOSTER = "live_cross_foster"
    INERT_TADBOT = "inert_tadbot"
    ACTUATED_TADBOT = "actuated_tadbot"


class CareKind(enum.Enum):
    FATHER_VISIT = "father_visit"
    FATHER_CALL = "father_call"
    MOTHER_VISIT = "mother_visit"
    EGG_PROVISION = "egg_provision"
    TADPOLE_FED = "tadpole_fed"
    MOTION_DETECTED = "motion_detected"
    MODE_ACTIVATED = "mode_activated"


class FeedingPreconditionError(RuntimeError):
    """Trial scheduling refused: tadpole not yet confirmed fed."""


class TimestampRegressionError(ValueError):
    """Care event older than the last logged event for its trial."""

    def __init__(self, trial_id: str, last_ts: datetime, new_ts: datetime):
        super().__init__(
            f"timestamp regression for trial {trial_id}: "
            f"last {format_timestamp(last_ts)}, new {format_timestamp(new_ts)}")
        self.last_ts = last_ts
        self.new_ts = new_ts


class LogParseError(ValueError):
    """Corrupt line in an event log; carries the 1-based line number."""

    def __init__(self, line_no: int, detail: str):
        super().__init__(f"line {line_no}: {detail}")
        self.line_no = line_no


@dataclass(frozen=True)
class TrialPhase:
    stimulus: Stimulus
    start_date: date
    end_date: date

    def covers(self, day: date) -> bool:
        return self.start_date <= day < self.end_date


@dataclass(frozen=True)
class Trial:
    """One parenting pair's randomized sequence of three stimulus phases."""

    trial_id: str
    pair_id: str
    canister_id: str
    seed: int
    phases: tuple[TrialPhase, TrialPhase, TrialPhase]

    def __post_init__(self) -> None:
        if len(self.phases) != 3:
            raise ValueError(f"expected 3 phases, got {len(self.phases)}")
        if {p.stimulus for p in self.phases} != set(Stimulus):
            raise ValueError("phases must cover all three stimuli exactly once")
        for p in self.phases:
            # scheduled phases are exactly 14 days; operator extension
            # (extend_phase) may lengthen one, never shorten it
            if (p.end_date - p.start_date).days < PHASE_DAYS:
                raise ValueError(f"phase {p.stimulus.value} spans "
                                 f"{(p.end_date - p.start_date).days} days, "
                                 f"minimum is {PHASE_DAYS}")
        for prev, nxt in zip(self.phases, self.phases[1:]):
            if prev.end_date != nxt.start_date:
                raise ValueError("phases must be contiguous")

    @property
    def start_date(self) -> date:
        return self.phases[0].start_date

    @property
    def end_date(self) -> date:
        return self.phases[-1].end_date

    def phase_on(self, day: date) -> TrialPhase | None:
        for p in self.phases:
            if p.covers(day):
                return p
        return None

    def phase_index(self, day: date) -> int | None:
        for i, p in enumerate(self.phases):
            if p.covers(day):
                return i
        return None

    def to_json(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "pair_id": self.pair_id,
            "canister_id": self.canister_id,
            "seed": self.seed,
            "phases": [{"stimulus": p.stimulus.value,
                        "start_date": p.start_date.isoformat(),
                        "end_date": p.end_date.isoformat()} for p in self.phases],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Trial":
        phases = tuple(
            TrialPhase(stimulus=Stimulus(p["stimulus"]),
                       start_date=date.fromisoformat(p["start_date"]),
                       end_date=date.fromisoformat(p["end_date"]))
            for p in obj["phases"])
        return cls(trial_id=obj["trial_id"], pair_id=obj["pair_id"],
                   canister_id=obj["canister_id"], seed=int(obj["seed"]),
                   phases=phases)  # type: ignore[arg-type]


@dataclass(frozen=True)
class CareEvent:
    ts: datetime
    trial_id: str
    kind: CareKind
    payload: str = ""

    def __post_init__(self) -> None:
        if self.ts.tzinfo is None:
            raise ValueError("care event timestamps must be timezone-aware")

    def to_json_line(self) -> str:
        return json.dumps({"ts": format_timestamp(self.ts),
                           "trial_id": self.trial_id,
                           "kind": self.kind.value,
                           "payload": self.payload},
                          separators=(",", ":"))

    @classmethod
    def from_json_line(cls, line: str) -> "CareEvent":
        obj = json.loads(line)
        return cls(ts=parse_timestamp(obj["ts"]), trial_id=str(obj["trial_id"]),
                   kind=CareKind(obj["kind"]), payload=str(obj.get("payload", "")))


@dataclass
class CareSummary:
    """Per-phase event counts for one trial, plus an unphased bucket."""

    trial_id: str
    phase_counts: list[dict[CareKind, int]]
    unphased: dict[CareKind, int]
    begging_activations: list[int]

    def as_flat(self) -> dict[tuple[object, CareKind], int]:
        """(phase index or 'unphased', kind) -> count, zero entries omitted."""
        flat: dict[tuple[object, CareKind], int] = {}
        for i, counts in enumerate(self.phase_counts):
            for kind, n in counts.items():
                if n:
                    flat[(i, kind)] = n
        for kind, n in self.unphased.items():
            if n:
                flat[("unphased", kind)] = n
        return flat

    @property
    def total(self) -> int:
        return (sum(n for c in self.phase_counts for n in c.values())
                + sum(self.unphased.values()))


@dataclass(frozen=True)
class GuardDecision:
    allowed: bool
    reason: str | None = None
    phase: Stimulus | None = None


def _fnv1a64(data: str) -> int:
    """Stable 64-bit hash of a string (FNV-1a); Python's hash() is salted."""
    h = 0xCBF29CE484222325
    for b in data.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


class _SplitMix64:
    """Tiny deterministic PRNG; good enough to shuffle three items fairly."""

    def __init__(self, state: int):
        self.state = state & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return (z ^ (z >> 31)) & _MASK64


def randomize_order(pair_id: str, seed: int) -> list[Stimulus]:
    """Deterministic, uniformly random order of the three stimuli.

    Mixes a stable hash of the pair id with the seed through SplitMix64,
    then Fisher-Yates shuffles the canonical stimulus order.
    """
    rng = _SplitMix64(_fnv1a64(pair_id) ^ (seed & _MASK64))
    order = list(Stimulus)
    for i in range(len(order) - 1, 0, -1):
        j = rng.next() % (i + 1)
        order[i], order[j] = order[j], order[i]
    return order


def schedule_trial(
    pair_id: str,
    canister_id: str,
    start_date: date,
    seed: int,
    fed_confirmed: bool = False,
    trial_id: str | None = None,
) -> Trial:
    """Build a trial of three contiguous 14-day phases in randomized order.

    Refuses to schedule until the operator asserts that the biological
    tadpole in the nursery has been fed at least once (fed_confirmed).
    """
    if not fed_confirmed:
        raise FeedingPreconditionError(
            f"pair {pair_id}: tadpole not confirmed fed at least once; "
            "set fed_confirmed once feeding is observed")
    order = randomize_order(pair_id, seed)
    phases = tuple(
        TrialPhase(stimulus=stim,
                   start_date=start_date + timedelta(days=PHASE_DAYS * i),
                   end_date=start_date + timedelta(days=PHASE_DAYS * (i + 1)))
        for i, stim in enumerate(order))
    return Trial(trial_id=trial_id or f"{pair_id}-{start_date.isoformat()}",
                 pair_id=pair_id, canister_id=canister_id, seed=seed,
                 phases=phases)  # type: ignore[arg-type]


def extend_phase(trial: Trial, phase_index: int, extra_days: int) -> Trial:
    """Lengthen one phase on the operator's explicit request.

    Used when observation must continue until an expected care bout (for
    example a maternal provisioning) has been seen. Later phases shift to
    stay contiguous; extension is never automatic.
    """
    if not 0 <= phase_index < len(trial.phases):
        raise ValueError(f"phase_index {phase_index} out of range")
    if extra_days < 1:
        raise ValueError(f"extra_days must be >= 1, got {extra_days}")
    shift = timedelta(days=extra_days)
    phases = []
    for i, p in enumerate(trial.phases):
        if i < phase_index:
            phases.append(p)
        elif i == phase_index:
            phases.append(TrialPhase(p.stimulus, p.start_date, p.end_date + shift))
        else:
            phases.append(TrialPhase(p.stimulus, p.start_date + shift,
                                     p.end_date + shift))
    return Trial(trial_id=trial.trial_id, pair_id=trial.pair_id,
                 canister_id=trial.canister_id, seed=trial.seed,
                 phases=tuple(phases))  # type: ignore[arg-type]


class EventLog:
    """Append-only newline-delimited JSON care-event log, one file per trial.

    A single writer owns the file; appends are flushed before returning so
    an acknowledged event survives a crash. Timestamps must be monotone
    non-decreasing per trial.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._last_ts: dict[str, datetime] = {}
        self._fh = None
        if self.path.exists():
            for ev in read_events(self.path):
                self._last_ts[ev.trial_id] = ev.ts

    def append(self, event: CareEvent) -> None:
        last = self._last_ts.get(event.trial_id)
        if last is not None and event.ts < last:
            raise TimestampRegressionError(event.trial_id, last, event.ts)
        if self._fh is None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "a", encoding="utf-8")
        self._fh.write(event.to_json_line() + "\n")
        self._fh.flush()
        self._last_ts[event.trial_id] = event.ts

    def events(self) -> list[CareEvent]:
        self.flush()
        if not self.path.exists():
            return []
        return list(read_events(self.path))

    def flush(self) -> None:
        if self._fh is not None:
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "EventLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_events(path: str | Path) -> Iterator[CareEvent]:
    """Strictly parse an event log; a corrupt line raises with its number."""
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                yield CareEvent.from_json_line(line)
            except (ValueError, KeyError) as exc:
                raise LogParseError(line_no, str(exc)) from exc


def record_event(log: EventLog, event: CareEvent) -> EventLog:
    """Append one event; returns the log for chaining."""
    log.append(event)
    return log


def summarize(events: Iterable[CareEvent], trial: Trial) -> CareSummary:
    """Count events per (phase, kind); events outside all phases go unphased.

    Begging activations are MODE_ACTIVATED events whose payload is the
    mode name "begging" (the gateway logs activations that way).
    """
    phase_counts: list[dict[CareKind, int]] = [
        {k: 0 for k in CareKind} for _ in range(3)]
    unphased: dict[CareKind, int] = {k: 0 for k in CareKind}
    begging = [0, 0, 0]
    for ev in events:
        if ev.trial_id != trial.trial_id:
            continue
        idx = trial.phase_index(ev.ts.date())
        if idx is None:
            unphased[ev.kind] += 1
        else:
            phase_counts[idx][ev.kind] += 1
            if ev.kind is CareKind.MODE_ACTIVATED and ev.payload == Mode.BEGGING.value:
                begging[idx] += 1
    return CareSummary(trial_id=trial.trial_id, phase_counts=phase_counts,
                       unphased=unphased, begging_activations=begging)


def guard_command(trial: Trial, now: datetime, requested_mode: Mode | None) -> GuardDecision:
    """Decide whether a device command is allowed under the trial's phase.

    Stop requests (requested_mode None or IDLE) are always allowed.
    Activations pass only inside the ACTUATED_TADBOT phase; anywhere else,
    including outside the trial span, they are denied with the reason.
    """
    if requested_mode is None or requested_mode is Mode.IDLE:
        return GuardDecision(allowed=True)
    phase = trial.phase_on(now.date())
    if phase is None:
        return GuardDecision(
            allowed=False,
            reason=f"{now.date().isoformat()} is outside trial {trial.trial_id} "
                   f"({trial.start_date.isoformat()}..{trial.end_date.isoformat()})")
    if phase.stimulus is not Stimulus.ACTUATED_TADBOT:
        return GuardDecision(
            allowed=False, phase=phase.stimulus,
            reason=f"activation denied during {phase.stimulus.value} phase "
                   f"of trial {trial.trial_id}")
    return GuardDecision(allowed=True, phase=phase.stimulus)


def events_to_csv(events: Iterable[CareEvent], trial: Trial | None = None) -> str:
    """CSV export of care events; phase resolved against the trial if given."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(EVENTS_CSV_HEADER)
    for ev in events:
        phase = ""
        if trial is not None and ev.trial_id == trial.trial_id:
            p = trial.phase_on(ev.ts.date())
            phase = p.stimulus.value if p is not None else "unphased"
        writer.writerow([format_timestamp(ev.ts), ev.trial_id, phase,
                         ev.kind.value, ev.payload])
    return out.getvalue()
