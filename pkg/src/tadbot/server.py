"""Transport layer: REST + server-sent events for clients, TCP for devices.

The north-bound API is plain HTTP/1.1 with an SSE stream for live data;
devices attach on a separate TCP port speaking the newline-delimited wire
protocol (first telemetry line registers the connection).
"""

from __future__ import annotations

import logging
import socket
import threading
from dataclasses import dataclass, field
from datetime import date

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse

from . import experiment as xp
from .actuation import ActuationConfig
from .analysis import SweepError, sweep_characterization, sweep_to_csv
from .gateway import (DeviceUnreachableError, Gateway, GuardDeniedError,
                      UnknownCameraError, UnknownDeviceError)
from .protocol import (Ack, Cmd, DecodeError, LineBuffer, Motion, Telemetry,
                       decode, encode)

log = logging.getLogger(__name__)

MAX_SWEEP_POINTS = 500


def create_app(gw: Gateway) -> FastAPI:
    app = FastAPI(title="tadbot gateway")

    @app.get("/status")
    def status() -> dict:
        return gw.status()

    @app.post("/devices/{device_id}/command")
    def command(device_id: str, body: dict) -> dict:
        action = body.get("action")
        if action not in ("activate", "stop", "set_tension"):
            raise HTTPException(400, f"unknown action {action!r}")
        try:
            ack = gw.command_device(device_id, action,
                                    mode=body.get("mode"),
                                    tension_n=body.get("tension_n"))
        except GuardDeniedError as exc:
            phase = exc.decision.phase.value if exc.decision.phase else None
            raise HTTPException(403, {"reason": str(exc), "phase": phase})
        except UnknownDeviceError:
            raise HTTPException(404, f"unknown device {device_id!r}")
        except DeviceUnreachableError as exc:
            raise HTTPException(502, str(exc))
        except (ValueError, TypeError) as exc:
            raise HTTPException(400, str(exc))
        return {"id": ack.id, "ok": ack.ok, "error": ack.error}

    @app.post("/cameras/{camera_id}/motion")
    async def motion(camera_id: str, request: Request) -> dict:
        raw = await request.body()
        try:
            msg = decode(raw.rstrip(b"\n"))
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        if not isinstance(msg, Motion):
            raise HTTPException(400, "body must be a motion message")
        if msg.camera != camera_id:
            raise HTTPException(400, f"camera mismatch: URL says {camera_id!r}, "
                                     f"body says {msg.camera!r}")
        try:
            result = gw.ingest_motion(msg)
        except UnknownCameraError:
            raise HTTPException(404, f"unknown camera {camera_id!r}")
        return {"stored": True, "seq": result.record.seq,
                "notified": result.notified, "duplicate": result.duplicate}

    @app.get("/events")
    def events(since: int = Query(default=0, ge=0)) -> StreamingResponse:
        def stream():
            yield f": epoch {gw.epoch}\n\n"
            for rec in gw.broker.follow(since):
                if rec is None:
                    yield ": keep-alive\n\n"
                else:
                    yield f"id: {rec.seq}\ndata: {rec.line}\n\n"

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/trials")
    def trials() -> list[dict]:
        return [t.to_json() for t in gw.trials()]

    @app.post("/trials")
    def post_trial(body: dict) -> JSONResponse:
        try:
            trial = xp.schedule_trial(
                pair_id=body["pair_id"],
                canister_id=body["canister_id"],
                start_date=date.fromisoformat(body["start_date"]),
                seed=int(body["seed"]),
                fed_confirmed=bool(body.get("fed_confirmed", False)),
                trial_id=body.get("trial_id"),
            )
            gw.add_trial(trial)
        except xp.FeedingPreconditionError as exc:
            raise HTTPException(409, str(exc))
        except KeyError as exc:
            raise HTTPException(400, f"missing field {exc}")
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        return JSONResponse(trial.to_json(), status_code=201)

    @app.get("/characterization")
    def characterization(fmin: float, fmax: float, step: float,
                         noise: float = 0.0, seed: int = 0) -> PlainTextResponse:
        if step <= 0 or fmin > fmax or fmin < 0:
            raise HTTPException(400, "need 0 <= fmin <= fmax and step > 0")
        n = int((fmax - fmin) / step) + 1
        if n > MAX_SWEEP_POINTS:
            raise HTTPException(400, f"{n} points exceeds cap {MAX_SWEEP_POINTS}")
        freqs = [fmin + k * step for k in range(n)]
        try:
            results = sweep_characterization(ActuationConfig(), freqs,
                                             noise_std_mm=noise, seed=seed)
        except SweepError as exc:
            raise HTTPException(400, str(exc))
        return PlainTextResponse(sweep_to_csv(results), media_type="text/csv")

    return app


@dataclass
class _PendingAcks:
    """Routes ack lines back to the thread waiting on the matching command id."""

    lock: threading.Lock = field(default_factory=threading.Lock)
    waiting: dict[str, threading.Event] = field(default_factory=dict)
    acks: dict[str, Ack] = field(default_factory=dict)

    def expect(self, cmd_id: str) -> threading.Event:
        ev = threading.Event()
        with self.lock:
            self.waiting[cmd_id] = ev
        return ev

    def resolve(self, ack: Ack) -> None:
        with self.lock:
            ev = self.waiting.pop(ack.id, None)
            if ev is None:
                log.warning("ack for unknown command id %s", ack.id)
                return
            self.acks[ack.id] = ack
        ev.set()

    def take(self, cmd_id: str) -> Ack | None:
        with self.lock:
            self.waiting.pop(cmd_id, None)
            return self.acks.pop(cmd_id, None)


class TcpDeviceLink:
    """Gateway-side handle for one connected device socket."""

    def __init__(self, sock: socket.socket, device_id: str):
        self.sock = sock
        self.device_id = device_id
        self.pending = _PendingAcks()
        self._send_lock = threading.Lock()

    def send_command(self, cmd: Cmd, timeout_s: float = 5.0) -> Ack:
        ev = self.pending.expect(cmd.id)
        with self._send_lock:
            self.sock.sendall(encode(cmd))
        if not ev.wait(timeout_s):
            self.pending.take(cmd.id)
            raise TimeoutError(f"device {self.device_id} ack timeout for {cmd.id}")
        ack = self.pending.take(cmd.id)
        assert ack is not None
        return ack


class DeviceSocketServer:
    """Accepts device connections and bridges them into the gateway.

    A device registers by sending any telemetry line; after that,
    telemetry keeps flowing into the gateway and commands are relayed in
    the other direction.
    """

    def __init__(self, gw: Gateway, host: str, port: int):
        self.gw = gw
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(0.5)
        self.address = self._listener.getsockname()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._accept_loop,
                                        name="device-accept", daemon=True)

    def start(self) -> "DeviceSocketServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self._listener.close()

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, addr = self._listener.accept()
            except TimeoutError:
                continue
            except OSError:
                break
            threading.Thread(target=self._serve_device, args=(conn, addr),
                             name=f"device-conn-{addr[1]}", daemon=True).start()

    def _serve_device(self, conn: socket.socket, addr) -> None:
        device_id: str | None = None
        link: TcpDeviceLink | None = None
        buf = LineBuffer()
        try:
            with conn:
                while not self._stop.is_set():
                    chunk = conn.recv(4096)
                    if not chunk:
                        break
                    for line in buf.feed(chunk):
                        try:
                            msg = decode(line)
                        except DecodeError as exc:
                            log.warning("bad line from device %s: %s", addr, exc)
                            continue
                        if isinstance(msg, Telemetry):
                            if device_id is None:
                                device_id = msg.device
                                link = TcpDeviceLink(conn, device_id)
                                self.gw.register_device_link(device_id, link)
                                log.info("device %s registered from %s", device_id, addr)
                            self.gw.ingest_telemetry(msg)
                        elif isinstance(msg, Ack) and link is not None:
                            link.pending.resolve(msg)
                        else:
                            log.warning("unexpected %s from device %s",
                                        type(msg).__name__, addr)
        except OSError as exc:
            log.info("device connection %s dropped: %s", addr, exc)
        finally:
            if device_id is not None:
                self.gw.unregister_device_link(device_id)


def parse_listen(listen: str) -> tuple[str, int]:
    host, _, port = listen.rpartition(":")
    return host or "127.0.0.1", int(port)


def run_server(gw: Gateway) -> None:
    """Serve HTTP and the device port until interrupted."""
    import uvicorn

    dev_host, dev_port = parse_listen(gw.config.device_listen)
    device_server = DeviceSocketServer(gw, dev_host, dev_port).start()
    host, port = parse_listen(gw.config.listen)
    log.info("gateway HTTP on %s:%d, device port on %s:%d",
             host, port, *device_server.address)
    try:
        uvicorn.run(create_app(gw), host=host, port=port, log_level="info")
    finally:
        device_server.stop()
        gw.close()
