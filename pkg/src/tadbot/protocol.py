"""Newline-delimited JSON wire protocol for the gateway loop.

Four message kinds cross the wire: commands (gateway -> device), acks
(device -> gateway), telemetry (device -> gateway) and motion events
(camera -> gateway). Each encodes to exactly one UTF-8 JSON object
terminated by a single newline. Unknown keys are ignored on decode for
forward compatibility; unknown message types are rejected. Encoded lines
never exceed MAX_LINE_BYTES.

Pure codec functions; concurrently callable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone

PROTOCOL_VERSION = 1
MAX_LINE_BYTES = 64 * 1024

ACTIONS = ("activate", "stop", "set_tension")
MODES = ("swimming", "begging")
PHASES = ("on", "off")
TELEMETRY_MODES = ("idle", "swimming", "begging")


class EncodeError(ValueError):
    """Message violates its type invariants and cannot be put on the wire."""


class DecodeError(ValueError):
    """Malformed wire line; `key` names the offending field when known."""

    def __init__(self, key: str, detail: str):
        super().__init__(f"bad wire message: {key}: {detail}")
        self.key = key


class OversizeLineError(ValueError):
    """A line (or unterminated remainder) exceeded MAX_LINE_BYTES."""


def format_timestamp(ts: datetime) -> str:
    """UTC ISO-8601 with a trailing Z."""
    if ts.tzinfo is None:
        raise EncodeError("timestamps must be timezone-aware")
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_timestamp(raw: str) -> datetime:
    if not isinstance(raw, str) or not raw.endswith("Z"):
        raise DecodeError("ts", f"expected UTC ISO-8601 ending in Z, got {raw!r}")
    try:
        return datetime.fromisoformat(raw[:-1] + "+00:00")
    except ValueError as exc:
        raise DecodeError("ts", str(exc)) from None


@dataclass(frozen=True)
class Cmd:
    id: str
    device: str
    action: str
    mode: str | None = None
    tension_n: float | None = None

    def __post_init__(self) -> None:
        if self.tension_n is not None:
            object.__setattr__(self, "tension_n", float(self.tension_n))


@dataclass(frozen=True)
class Ack:
    id: str
    ok: bool
    error: str | None = None


@dataclass(frozen=True)
class Telemetry:
    device: str
    t_s: float
    mode: str
    phase: str
    freq_hz: float
    remaining_s: float
    tension_n: float

    def __post_init__(self) -> None:
        for name in ("t_s", "freq_hz", "remaining_s", "tension_n"):
            object.__setattr__(self, name, float(getattr(self, name)))


@dataclass(frozen=True)
class Motion:
    camera: str
    score: float
    ts: datetime

    def __post_init__(self) -> None:
        object.__setattr__(self, "score", float(self.score))


WireMessage = Cmd | Ack | Telemetry | Motion


def _validate_cmd(msg: Cmd) -> None:
    if msg.action not in ACTIONS:
        raise EncodeError(f"unknown action {msg.action!r}")
    if (msg.mode is not None) != (msg.action == "activate"):
        raise EncodeError("mode must be present iff action is 'activate'")
    if msg.mode is not None and msg.mode not in MODES:
        raise EncodeError(f"unknown mode {msg.mode!r}")
    if (msg.tension_n is not None) != (msg.action == "set_tension"):
        raise EncodeError("tension_n must be present iff action is 'set_tension'")
    if not msg.id or not msg.device:
        raise EncodeError("id and device must be non-empty")


def encode(msg: WireMessage) -> bytes:
    """Encode one message as a UTF-8 JSON line (trailing newline included)."""
    if isinstance(msg, Cmd):
        _validate_cmd(msg)
        obj: dict = {"v": PROTOCOL_VERSION, "type": "cmd", "id": msg.id,
                     "device": msg.device, "action": msg.action}
        if msg.mode is not None:
            obj["mode"] = msg.mode
        if msg.tension_n is not None:
            obj["tension_n"] = msg.tension_n
    elif isinstance(msg, Ack):
        if not isinstance(msg.ok, bool):
            raise EncodeError("ok must be a boolean")
        obj = {"v": PROTOCOL_VERSION, "type": "ack", "id": msg.id, "ok": msg.ok}
        if msg.error is not None:
            obj["error"] = msg.error
    elif isinstance(msg, Telemetry):
        if msg.mode not in TELEMETRY_MODES:
            raise EncodeError(f"unknown telemetry mode {msg.mode!r}")
        if msg.phase not in PHASES:
            raise EncodeError(f"unknown phase {msg.phase!r}")
        obj = {"v": PROTOCOL_VERSION, "type": "telemetry", "device": msg.device,
               "t_s": msg.t_s, "mode": msg.mode, "phase": msg.phase,
               "freq_hz": msg.freq_hz, "remaining_s": msg.remaining_s,
               "tension_n": msg.tension_n}
    elif isinstance(msg, Motion):
        if not 0.0 <= msg.score <= 1.0:
            raise EncodeError(f"score {msg.score} outside [0, 1]")
        obj = {"v": PROTOCOL_VERSION, "type": "motion", "camera": msg.camera,
               "score": msg.score, "ts": format_timestamp(msg.ts)}
    else:
        raise EncodeError(f"not a wire message: {type(msg).__name__}")

    line = json.dumps(obj, separators=(",", ":")).encode("utf-8") + b"\n"
    if len(line) > MAX_LINE_BYTES:
        raise EncodeError(f"encoded line is {len(line)} bytes, cap is {MAX_LINE_BYTES}")
    return line


def _require(obj: dict, key: str, kinds) -> object:
    if key not in obj:
        raise DecodeError(key, "missing required key")
    val = obj[key]
    kinds = kinds if isinstance(kinds, tuple) else (kinds,)
    # JSON booleans are ints in Python; keep them out of numeric fields
    if isinstance(val, bool) and bool not in kinds:
        raise DecodeError(key, "wrong type bool")
    if not isinstance(val, kinds):
        raise DecodeError(key, f"wrong type {type(val).__name__}")
    return val


def _number(obj: dict, key: str) -> float:
    return float(_require(obj, key, (int, float)))


def decode(data: bytes | str) -> WireMessage:
    """Decode one complete wire line back into a message.

    Inverse of encode for every valid message. Unknown keys are ignored;
    a DecodeError names the first offending key otherwise.
    """
    if isinstance(data, bytes):
        if len(data) > MAX_LINE_BYTES:
            raise OversizeLineError(f"line is {len(data)} bytes, cap is {MAX_LINE_BYTES}")
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError("<line>", f"not UTF-8: {exc}") from None
    else:
        text = data
    text = text.rstrip("\n")
    if "\n" in text:
        raise DecodeError("<line>", "interior newline; decode takes one line")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError("<line>", f"not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise DecodeError("<line>", "expected a JSON object")

    version = _require(obj, "v", int)
    if version != PROTOCOL_VERSION:
        raise DecodeError("v", f"unsupported version {version}")
    mtype = _require(obj, "type", str)

    if mtype == "cmd":
        action = _require(obj, "action", str)
        if action not in ACTIONS:
            raise DecodeError("action", f"unknown action {action!r}")
        mode = obj.get("mode")
        if action == "activate":
            if mode is None:
                raise DecodeError("mode", "required when action is 'activate'")
            if mode not in MODES:
                raise DecodeError("mode", f"unknown mode {mode!r}")
        elif mode is not None:
            raise DecodeError("mode", f"not allowed for action {action!r}")
        tension = obj.get("tension_n")
        if action == "set_tension":
            tension = _number(obj, "tension_n")
        elif tension is not None:
            raise DecodeError("tension_n", f"not allowed for action {action!r}")
        return Cmd(id=str(_require(obj, "id", str)),
                   device=str(_require(obj, "device", str)),
                   action=action, mode=mode, tension_n=tension)
    if mtype == "ack":
        error = obj.get("error")
        if error is not None and not isinstance(error, str):
            raise DecodeError("error", "must be a string")
        return Ack(id=str(_require(obj, "id", str)),
                   ok=bool(_require(obj, "ok", bool)), error=error)
    if mtype == "telemetry":
        mode = _require(obj, "mode", str)
        if mode not in TELEMETRY_MODES:
            raise DecodeError("mode", f"unknown mode {mode!r}")
        phase = _require(obj, "phase", str)
        if phase not in PHASES:
            raise DecodeError("phase", f"unknown phase {phase!r}")
        return Telemetry(device=str(_require(obj, "device", str)),
                         t_s=_number(obj, "t_s"), mode=mode, phase=phase,
                         freq_hz=_number(obj, "freq_hz"),
                         remaining_s=_number(obj, "remaining_s"),
                         tension_n=_number(obj, "tension_n"))
    if mtype == "motion":
        score = _number(obj, "score")
        if not 0.0 <= score <= 1.0:
            raise DecodeError("score", f"{score} outside [0, 1]")
        return Motion(camera=str(_require(obj, "camera", str)), score=score,
                      ts=parse_timestamp(_require(obj, "ts", str)))
    raise DecodeError("type", f"unknown message type {mtype!r}")


def frame_split(stream: bytes) -> tuple[list[bytes], bytes]:
    """Split a byte stream on newlines into complete lines plus a remainder.

    Lines come back without their terminators; the trailing partial line
    (possibly empty) is returned for reassembly. Splitting a stream at any
    chunk boundaries and re-feeding yields the same line sequence.
    """
    parts = stream.split(b"\n")
    return parts[:-1], parts[-1]


class LineBuffer:
    """Stateful reassembler for chunked wire input with the line cap enforced."""

    def __init__(self, max_line_bytes: int = MAX_LINE_BYTES):
        self.max_line_bytes = max_line_bytes
        self._rest = b""

    def feed(self, chunk: bytes) -> list[bytes]:
        """Absorb a chunk and return any completed lines."""
        lines, self._rest = frame_split(self._rest + chunk)
        for ln in lines:
            if len(ln) > self.max_line_bytes:
                raise OversizeLineError(
                    f"line is {len(ln)} bytes, cap is {self.max_line_bytes}")
        if len(self._rest) > self.max_line_bytes:
            raise OversizeLineError(
                f"unterminated data is {len(self._rest)} bytes, "
                f"cap is {self.max_line_bytes}")
        return lines

    @property
    def pending(self) -> bytes:
        return self._rest
