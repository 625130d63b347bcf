"""Simulated TadBot devices: in-process for tests, over TCP for live runs.

A SimDevice owns one immutable runtime state and advances it on a virtual
clock, emitting a telemetry snapshot every simulated second. The TCP
client speaks the wire protocol to a gateway's device port, executing
commands as they arrive and reconnecting with backoff if the link drops.
"""

from __future__ import annotations

import json
import logging
import math
import socket
import threading
import time
from typing import Callable

from . import runtime as rt
from .protocol import Ack, Cmd, LineBuffer, Telemetry, decode, encode

log = logging.getLogger(__name__)

RECONNECT_BACKOFF_S = (1.0, 2.0, 4.0, 8.0)


class SimDevice:
    """One simulated device: executes commands, ticks, reports telemetry."""

    def __init__(self, device_id: str, tick_s: float = 0.01,
                 tension_limit_n: float = 2.0,
                 on_telemetry: Callable[[Telemetry], None] | None = None):
        self.state = rt.DeviceState(device_id=device_id, tick_s=tick_s,
                                    tension_limit_n=tension_limit_n)
        self.on_telemetry = on_telemetry
        self.setpoint_hz = 0.0

    @property
    def device_id(self) -> str:
        return self.state.device_id

    def execute(self, cmd: Cmd) -> Ack:
        """Apply one command to the runtime state; failures become nacks."""
        try:
            if cmd.action == "activate":
                self.state = rt.activate_mode(self.state, rt.Mode(cmd.mode))
            elif cmd.action == "stop":
                self.state = rt.stop(self.state)
            elif cmd.action == "set_tension":
                self.state = rt.set_tension(self.state, cmd.tension_n)
            else:
                return Ack(id=cmd.id, ok=False, error=f"unknown action {cmd.action!r}")
        except (rt.InterlockError, ValueError) as exc:
            return Ack(id=cmd.id, ok=False, error=str(exc))
        self.setpoint_hz = rt.current_setpoint(self.state)
        return Ack(id=cmd.id, ok=True)

    def _second_index(self, t_s: float) -> int:
        # half-tick slack so accumulated float error cannot skip a boundary
        return int(math.floor(t_s + 0.5 * self.state.tick_s))

    def tick(self) -> float:
        """Advance one tick; emits telemetry when a simulated second passes."""
        before = self.state.clock_s
        self.state, self.setpoint_hz = rt.tick(self.state)
        crossed = self._second_index(self.state.clock_s) > self._second_index(before)
        if crossed and self.on_telemetry is not None:
            self.on_telemetry(self.telemetry())
        return self.setpoint_hz

    def run_for(self, seconds: float) -> None:
        """Advance the virtual clock by a span of simulated seconds."""
        for _ in range(int(round(seconds / self.state.tick_s))):
            self.tick()

    def telemetry(self) -> Telemetry:
        setpoint = rt.current_setpoint(self.state)
        return Telemetry(
            device=self.state.device_id,
            t_s=self.state.clock_s,
            mode=self.state.mode.value,
            phase="on" if setpoint > 0 else "off",
            freq_hz=setpoint,
            remaining_s=rt.remaining_s(self.state),
            tension_n=self.state.tension_n,
        )


class InProcessLink:
    """Device link that executes commands synchronously on a SimDevice."""

    def __init__(self, device: SimDevice):
        self.device = device

    def send_command(self, cmd: Cmd, timeout_s: float = 5.0) -> Ack:
        return self.device.execute(cmd)


def _ack_for_bad_line(raw: bytes, error: str) -> Ack:
    """Nack a line we could not decode, salvaging the command id if any."""
    cmd_id = "?"
    try:
        obj = json.loads(raw.decode("utf-8", errors="replace"))
        if isinstance(obj, dict) and isinstance(obj.get("id"), str):
            cmd_id = obj["id"]
    except ValueError:
        pass
    return Ack(id=cmd_id, ok=False, error=error)


def run_device_client(
    device_id: str,
    gateway_addr: tuple[str, int],
    tick_s: float = 0.01,
    virtual_time: bool = False,
    tension_limit_n: float = 2.0,
    stop_event: threading.Event | None = None,
) -> None:
    """Connect to a gateway device port and serve until told to stop.

    Registers by sending an initial telemetry snapshot, then executes
    incoming commands and streams telemetry every simulated second. In
    wall-clock mode the virtual clock tracks real time; with virtual_time
    the clock free-runs as fast as the loop allows. Device state survives
    reconnects.
    """
    stop_event = stop_event or threading.Event()
    pending: list[bytes] = []

    def queue_telemetry(telem: Telemetry) -> None:
        pending.append(encode(telem))

    device = SimDevice(device_id, tick_s=tick_s, tension_limit_n=tension_limit_n,
                       on_telemetry=queue_telemetry)
    backoff_idx = 0
    while not stop_event.is_set():
        try:
            with socket.create_connection(gateway_addr, timeout=5.0) as sock:
                log.info("device %s connected to %s:%d", device_id, *gateway_addr)
                backoff_idx = 0
                sock.sendall(encode(device.telemetry()))
                sock.settimeout(0.0005 if virtual_time else tick_s)
                buf = LineBuffer()
                last_wall = time.monotonic()
                while not stop_event.is_set():
                    try:
                        chunk = sock.recv(4096)
                        if not chunk:
                            raise ConnectionError("gateway closed the connection")
                        for line in buf.feed(chunk):
                            try:
                                msg = decode(line)
                            except ValueError as exc:
                                sock.sendall(encode(_ack_for_bad_line(line, str(exc))))
                                continue
                            if isinstance(msg, Cmd):
                                sock.sendall(encode(device.execute(msg)))
                            else:
                                log.debug("ignoring %s from gateway", type(msg).__name__)
                    except (TimeoutError, BlockingIOError, socket.timeout):
                        pass
                    if virtual_time:
                        device.tick()
                    else:
                        now = time.monotonic()
                        ticks = int((now - last_wall) / tick_s)
                        if ticks > 0:
                            last_wall += ticks * tick_s
                            for _ in range(ticks):
                                device.tick()
                    while pending:
                        sock.sendall(pending.pop(0))
        except OSError as exc:
            if stop_event.is_set():
                break
            pause = RECONNECT_BACKOFF_S[min(backoff_idx, len(RECONNECT_BACKOFF_S) - 1)]
            backoff_idx += 1
            log.warning("device %s lost gateway (%s); retrying in %.0f s",
                        device_id, exc, pause)
            stop_event.wait(pause)
