"""Gateway core: ties cameras, devices, trials and the event stream together.

Ingests camera motion events (storing them as care events and firing the
notification webhook above a score threshold), relays experimenter
commands to devices through the wire protocol with trial-phase guarding,
and feeds an ordered broadcast of everything to any number of stream
subscribers.

Request handling may be concurrent; the event broker is a single-writer
ordered log, commands are serialized per device, and each trial's care
log has one writer (the gateway itself).
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterator, Protocol

from . import experiment as xp
from .protocol import Ack, Cmd, Motion, Telemetry, encode
from .runtime import Mode

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.02
WEBHOOK_BACKOFF_S = (1.0, 2.0, 4.0)


class UnknownCameraError(KeyError):
    pass


class UnknownDeviceError(KeyError):
    pass


class DeviceUnreachableError(RuntimeError):
    pass


class GuardDeniedError(PermissionError):
    """Command refused by the trial-phase guard."""

    def __init__(self, decision: xp.GuardDecision):
        super().__init__(decision.reason or "denied")
        self.decision = decision


@dataclass
class DeviceEntry:
    """Registry entry: which parenting pair a device belongs to, if any.

    Devices without a pair binding are bench hardware outside any trial;
    the phase guard does not apply to them.
    """

    pair_id: str | None = None
    endpoint: str | None = None


@dataclass
class GatewayConfig:
    listen: str = "127.0.0.1:8080"
    device_listen: str = "127.0.0.1:8081"
    webhook_url: str | None = None
    motion_threshold: float = DEFAULT_THRESHOLD
    devices: dict[str, DeviceEntry] = field(default_factory=dict)
    cameras: dict[str, str] = field(default_factory=dict)  # camera_id -> pair_id
    data_dir: Path = Path("gateway-data")

    def __post_init__(self) -> None:
        if not 0.0 <= self.motion_threshold <= 1.0:
            raise ValueError(
                f"motion_threshold must lie in [0, 1], got {self.motion_threshold}")
        self.data_dir = Path(self.data_dir)

    @classmethod
    def from_file(cls, path: str | Path) -> "GatewayConfig":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        devices = {did: DeviceEntry(pair_id=entry.get("pair_id"),
                                    endpoint=entry.get("endpoint"))
                   for did, entry in obj.get("devices", {}).items()}
        return cls(listen=obj.get("listen", cls.listen),
                   device_listen=obj.get("device_listen", cls.device_listen),
                   webhook_url=obj.get("webhook_url"),
                   motion_threshold=obj.get("motion_threshold", DEFAULT_THRESHOLD),
                   devices=devices,
                   cameras=dict(obj.get("cameras", {})),
                   data_dir=Path(obj.get("data_dir", "gateway-data")))

    def apply_env(self, env=os.environ) -> "GatewayConfig":
        """Environment variables override file values."""
        if "GATEWAY_LISTEN" in env:
            self.listen = env["GATEWAY_LISTEN"]
        if "GATEWAY_DEVICE_LISTEN" in env:
            self.device_listen = env["GATEWAY_DEVICE_LISTEN"]
        if "GATEWAY_WEBHOOK" in env:
            self.webhook_url = env["GATEWAY_WEBHOOK"] or None
        if "GATEWAY_THRESHOLD" in env:
            self.motion_threshold = float(env["GATEWAY_THRESHOLD"])
        if "GATEWAY_DATA_DIR" in env:
            self.data_dir = Path(env["GATEWAY_DATA_DIR"])
        return self


@dataclass(frozen=True)
class EventRecord:
    """One broadcast record: a wire-protocol or care-event line."""

    epoch: int
    seq: int
    kind: str  # "motion" | "telemetry" | "care"
    line: str
    received_ts: datetime


class EventBroker:
    """Single-writer ordered broadcast with replay.

    Sequence numbers are strictly increasing with no gaps within one
    epoch; every subscriber observes the same total order.
    """

    def __init__(self, epoch: int):
        self.epoch = epoch
        self._records: list[EventRecord] = []
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)

    def publish(self, kind: str, line: str, received_ts: datetime) -> EventRecord:
        with self._cond:
            rec = EventRecord(epoch=self.epoch, seq=len(self._records) + 1,
                              kind=kind, line=line, received_ts=received_ts)
            self._records.append(rec)
            self._cond.notify_all()
            return rec

    def records_since(self, since_seq: int) -> list[EventRecord]:
        if since_seq < 0:
            raise ValueError(f"since_seq must be >= 0, got {since_seq}")
        with self._lock:
            return self._records[since_seq:]

    def counts(self) -> dict[str, int]:
        with self._lock:
            out: dict[str, int] = {}
            for rec in self._records:
                out[rec.kind] = out.get(rec.kind, 0) + 1
            out["total"] = len(self._records)
            return out

    def follow(self, since_seq: int, stop: threading.Event | None = None,
               poll_s: float = 0.25) -> Iterator[EventRecord | None]:
        """Yield records after since_seq, then live ones; None on idle polls.

        The None yields let a transport layer emit keep-alives and check
        for client disconnects without blocking forever.
        """
        cursor = since_seq
        while stop is None or not stop.is_set():
            with self._cond:
                fresh = self._records[cursor:]
                if not fresh:
                    self._cond.wait(timeout=poll_s)
                    fresh = self._records[cursor:]
            if fresh:
                for rec in fresh:
                    yield rec
                cursor = fresh[-1].seq
            else:
                yield None


class WebhookNotifier:
    """POSTs motion messages to a webhook URL, retrying with backoff.

    Failures are retried three times (1 s, 2 s, 4 s apart) and then
    logged; the poster and sleeper are injectable so tests run instantly.
    """

    def __init__(self, url: str,
                 post: Callable[[str, bytes], None] | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.url = url
        self._post = post or _httpx_post
        self._sleep = sleep

    def deliver(self, motion: Motion) -> bool:
        body = encode(motion)
        for i, pause in enumerate((None,) + WEBHOOK_BACKOFF_S):
            if pause is not None:
                self._sleep(pause)
            try:
                self._post(self.url, body)
                return True
            except Exception as exc:
                log.warning("webhook attempt %d to %s failed: %s", i + 1, self.url, exc)
        log.error("webhook to %s gave up after %d attempts",
                  self.url, 1 + len(WEBHOOK_BACKOFF_S))
        return False


def _httpx_post(url: str, body: bytes) -> None:
    import httpx

    resp = httpx.post(url, content=body,
                      headers={"content-type": "application/json"}, timeout=5.0)
    resp.raise_for_status()


@dataclass(frozen=True)
class IngestResult:
    record: EventRecord
    notified: bool
    duplicate: bool = False


class DeviceLink(Protocol):
    def send_command(self, cmd: Cmd, timeout_s: float = 5.0) -> Ack: ...


class Gateway:
    """The long-running service core, transport-agnostic and clock-injectable."""

    def __init__(self, config: GatewayConfig,
                 notifier: WebhookNotifier | None = None,
                 clock: Callable[[], datetime] | None = None):
        self.config = config
        self.config.data_dir.mkdir(parents=True, exist_ok=True)
        self.epoch = self._bump_epoch()
        self.broker = EventBroker(self.epoch)
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        if notifier is None and config.webhook_url:
            notifier = WebhookNotifier(config.webhook_url)
        self.notifier = notifier
        self._links: dict[str, DeviceLink] = {}
        self._latest_telemetry: dict[str, Telemetry] = {}
        self._logs: dict[str, xp.EventLog] = {}
        self._seen_motion: dict[tuple[str, str], EventRecord] = {}
        self._trials: list[xp.Trial] = self._load_trials()
        self._cmd_lock = threading.Lock()
        self._device_locks: dict[str, threading.Lock] = {}
        self._cmd_counter = 0

    # ---- persistence ----

    def _bump_epoch(self) -> int:
        path = self.config.data_dir / "epoch"
        current = 0
        if path.exists():
            current = int(path.read_text().strip() or 0)
        path.write_text(str(current + 1))
        return current + 1

    def _trials_path(self) -> Path:
        return self.config.data_dir / "trials.json"

    def _load_trials(self) -> list[xp.Trial]:
        path = self._trials_path()
        if not path.exists():
            return []
        with open(path, encoding="utf-8") as fh:
            return [xp.Trial.from_json(obj) for obj in json.load(fh)]

    def _save_trials(self) -> None:
        path = self._trials_path()
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps([t.to_json() for t in self._trials], indent=2))
        tmp.replace(path)

    def care_log(self, trial_id: str) -> xp.EventLog:
        if trial_id not in self._logs:
            self._logs[trial_id] = xp.EventLog(
                self.config.data_dir / f"trial-{trial_id}.log")
        return self._logs[trial_id]

    # ---- trials ----

    def add_trial(self, trial: xp.Trial) -> None:
        if any(t.trial_id == trial.trial_id for t in self._trials):
            raise ValueError(f"trial {trial.trial_id} already exists")
        self._trials.append(trial)
        self._save_trials()

    def trials(self) -> list[xp.Trial]:
        return list(self._trials)

    def trial_by_id(self, trial_id: str) -> xp.Trial | None:
        for t in self._trials:
            if t.trial_id == trial_id:
                return t
        return None

    def active_trial_for_pair(self, pair_id: str, now: datetime) -> xp.Trial | None:
        for t in self._trials:
            if t.pair_id == pair_id and t.phase_on(now.date()) is not None:
                return t
        return None

    # ---- devices ----

    def register_device_link(self, device_id: str, link: DeviceLink) -> None:
        if device_id not in self.config.devices:
            log.info("device %s connected without a registry entry (bench mode)",
                     device_id)
            self.config.devices[device_id] = DeviceEntry()
        self._links[device_id] = link

    def unregister_device_link(self, device_id: str) -> None:
        self._links.pop(device_id, None)

    def _next_cmd_id(self) -> str:
        with self._cmd_lock:
            self._cmd_counter += 1
            return f"c{self._cmd_counter}"

    def _device_lock(self, device_id: str) -> threading.Lock:
        with self._cmd_lock:
            return self._device_locks.setdefault(device_id, threading.Lock())

    def command_device(self, device_id: str, action: str,
                       mode: str | None = None,
                       tension_n: float | None = None,
                       now: datetime | None = None) -> Ack:
        """Guard, encode and relay one command; returns the device's ack.

        Activations are checked against the active trial of the device's
        pair: outside the actuated phase (or with no active trial) they
        are denied before anything reaches the device. Commands are never
        auto-retried; an experimenter must observe a failure.
        """
        if device_id not in self.config.devices and device_id not in self._links:
            raise UnknownDeviceError(device_id)
        now = now or self.clock()
        trial = None
        entry = self.config.devices.get(device_id)
        pair_id = entry.pair_id if entry else None
        if action == "activate" and pair_id is not None:
            trial = self.active_trial_for_pair(pair_id, now)
            if trial is None:
                raise GuardDeniedError(xp.GuardDecision(
                    allowed=False,
                    reason=f"no active trial for pair {pair_id}; activation denied"))
            decision = xp.guard_command(trial, now, Mode(mode) if mode else None)
            if not decision.allowed:
                raise GuardDeniedError(decision)

        link = self._links.get(device_id)
        if link is None:
            raise DeviceUnreachableError(f"device {device_id} has no live transport")
        cmd = Cmd(id=self._next_cmd_id(), device=device_id, action=action,
                  mode=mode, tension_n=tension_n)
        with self._device_lock(device_id):  # one in-flight command per device
            try:
                ack = link.send_command(cmd)
            except Exception as exc:
                raise DeviceUnreachableError(
                    f"device {device_id} did not answer: {exc}") from exc

        if ack.ok and action == "activate" and trial is not None:
            self._append_care(trial, xp.CareEvent(
                ts=now, trial_id=trial.trial_id,
                kind=xp.CareKind.MODE_ACTIVATED, payload=mode or ""))
        return ack

    # ---- ingest ----

    def _append_care(self, trial: xp.Trial, event: xp.CareEvent) -> None:
        self.care_log(trial.trial_id).append(event)
        self.broker.publish("care", event.to_json_line(), self.clock())

    def ingest_motion(self, motion: Motion) -> IngestResult:
        """Store a camera motion event; notify the webhook above threshold.

        Storage is idempotent on (camera, ts) so at-least-once delivery
        from the camera side cannot double-count an observation.
        """
        if motion.camera not in self.config.cameras:
            raise UnknownCameraError(motion.camera)
        key = (motion.camera, motion.ts.isoformat())
        line = encode(motion).decode("utf-8").rstrip("\n")
        if key in self._seen_motion:
            # duplicate delivery: already stored, never re-notified
            return IngestResult(record=self._seen_motion[key],
                                notified=False, duplicate=True)
        record = self.broker.publish("motion", line, self.clock())
        self._seen_motion[key] = record

        pair_id = self.config.cameras[motion.camera]
        trial = self.active_trial_for_pair(pair_id, self.clock())
        if trial is not None:
            self._append_care(trial, xp.CareEvent(
                ts=self.clock(), trial_id=trial.trial_id,
                kind=xp.CareKind.MOTION_DETECTED,
                payload=f"camera={motion.camera} score={motion.score!r} "
                        f"observed={motion.ts.isoformat()}"))

        notified = False
        if motion.score >= self.config.motion_threshold and self.notifier is not None:
            notified = self.notifier.deliver(motion)
        return IngestResult(record=record, notified=notified)

    def ingest_telemetry(self, telem: Telemetry) -> EventRecord:
        self._latest_telemetry[telem.device] = telem
        line = encode(telem).decode("utf-8").rstrip("\n")
        return self.broker.publish("telemetry", line, self.clock())

    # ---- queries ----

    def stream_events(self, since_seq: int) -> list[EventRecord]:
        return self.broker.records_since(since_seq)

    def status(self) -> dict:
        """Snapshot: per-device telemetry, trial phases, event counts."""
        now = self.clock()
        devices = {}
        for device_id, entry in self.config.devices.items():
            telem = self._latest_telemetry.get(device_id)
            active = None
            allowed = True
            reason = None
            if entry.pair_id is not None:
                trial = self.active_trial_for_pair(entry.pair_id, now)
                if trial is None:
                    allowed, reason = False, f"no active trial for pair {entry.pair_id}"
                else:
                    decision = xp.guard_command(trial, now, Mode.BEGGING)
                    allowed, reason = decision.allowed, decision.reason
                    phase = trial.phase_on(now.date())
                    active = phase.stimulus.value if phase else None
            devices[device_id] = {
                "pair_id": entry.pair_id,
                "connected": device_id in self._links,
                "telemetry": _telemetry_dict(telem),
                "active_stimulus": active,
                "activation_allowed": allowed,
                "guard_reason": reason,
            }
        trials = []
        for t in self._trials:
            phase = t.phase_on(now.date())
            trials.append({
                "trial_id": t.trial_id,
                "pair_id": t.pair_id,
                "canister_id": t.canister_id,
                "start_date": t.start_date.isoformat(),
                "end_date": t.end_date.isoformat(),
                "active_stimulus": phase.stimulus.value if phase else None,
                "phases": [{"stimulus": p.stimulus.value,
                            "start_date": p.start_date.isoformat(),
                            "end_date": p.end_date.isoformat()} for p in t.phases],
            })
        return {"epoch": self.epoch, "devices": devices, "trials": trials,
                "events": self.broker.counts()}

    def close(self) -> None:
        for lg in self._logs.values():
            lg.close()


def _telemetry_dict(telem: Telemetry | None) -> dict | None:
    if telem is None:
        return None
    return {"device": telem.device, "t_s": telem.t_s, "mode": telem.mode,
            "phase": telem.phase, "freq_hz": telem.freq_hz,
            "remaining_s": telem.remaining_s, "tension_n": telem.tension_n}
