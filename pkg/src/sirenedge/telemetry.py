"""Live monitoring/control service over WebSocket.

Engine-side publishing goes through a TelemetryHub that fans every message
out to per-client bounded queues; a client that stops draining its queue is
disconnected rather than back-pressuring the engine. Control commands come
in as JSON over the same socket, are validated here, applied to the engine
between frames, and acked exactly once to the issuing client.

Endpoints: WebSocket ``/ws`` (one JSON object per text frame) and
``GET /healthz``. Messages: score / event / diag / error, as documented in
the engine module. Commands: set_decision_threshold, set_growth_threshold,
set_growth_step, load_clip, start, stop.
"""

from __future__ import annotations

import asyncio
import json
import threading
import time
from collections import deque

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .core import load_wav
from .errors import IoError, SirenEdgeError
from .framing import resample_linear

DEFAULT_LISTEN = "127.0.0.1:8765"
DEFAULT_QUEUE_LIMIT = 1024


class TelemetryClient:
    """One subscriber's bounded message queue."""

    def __init__(self, limit: int):
        self.limit = limit
        self.dead = False
        self._messages: deque[str] = deque()
        self._cond = threading.Condition()

    def offer(self, text: str) -> None:
        with self._cond:
            if self.dead:
                return
            if len(self._messages) >= self.limit:
                self.dead = True  # slow client: cut it loose
            else:
                self._messages.append(text)
            self._cond.notify_all()

    def get(self, timeout: float | None = None) -> str | None:
        with self._cond:
            if not self._messages and not self.dead:
                self._cond.wait(timeout)
            if self._messages:
                return self._messages.popleft()
            return None

    def kill(self) -> None:
        with self._cond:
            self.dead = True
            self._cond.notify_all()


class TelemetryHub:
    """Fan-out point between the engine and any number of subscribers."""

    def __init__(self, queue_limit: int = DEFAULT_QUEUE_LIMIT):
        self.queue_limit = queue_limit
        self._clients: list[TelemetryClient] = []
        self._lock = threading.Lock()

    def register(self) -> TelemetryClient:
        client = TelemetryClient(self.queue_limit)
        with self._lock:
            self._clients.append(client)
        return client

    def unregister(self, client: TelemetryClient) -> None:
        client.kill()
        with self._lock:
            if client in self._clients:
                self._clients.remove(client)

    def publish(self, msg: dict) -> None:
        """Broadcast one message; never blocks the caller."""
        text = json.dumps(msg)
        with self._lock:
            clients = list(self._clients)
        for client in clients:
            client.offer(text)

    @property
    def client_count(self) -> int:
        with self._lock:
            return len(self._clients)


def apply_command(engine, cmd) -> dict:
    """Validate a control command, hand it to the engine, return the ack."""
    if not isinstance(cmd, dict) or "cmd" not in cmd:
        return {"ok": False, "msg": "command must be an object with a 'cmd' field"}
    name = cmd["cmd"]

    def threshold_value():
        value = float(cmd.get("value"))
        if not 0.0 < value < 1.0:
            raise ValueError(f"value {value} outside (0, 1)")
        return value

    try:
        if name == "set_decision_threshold":
            engine.post_command("decision_threshold", threshold_value())
        elif name == "set_growth_threshold":
            engine.post_command("growth_threshold", threshold_value())
        elif name == "set_growth_step":
            value = float(cmd.get("value"))
            if value < 0.0:
                raise ValueError("growth step must be >= 0")
            engine.post_command("growth_step", value)
        elif name == "load_clip":
            clip = load_wav(cmd.get("path"))
            if clip.sample_rate_hz != engine.cfg.sample_rate_hz:
                clip = resample_linear(clip, engine.cfg.sample_rate_hz)
            engine.post_command("load_clip", clip)
        elif name == "start":
            engine.post_command("start")
        elif name == "stop":
            engine.post_command("stop")
        else:
            return {"ok": False, "msg": f"unknown cmd {name!r}"}
    except (TypeError, ValueError, SirenEdgeError) as exc:
        return {"ok": False, "msg": str(exc)}
    return {"ok": True, "cmd": name}


def build_app(engine, hub: TelemetryHub) -> FastAPI:
    app = FastAPI()

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.websocket("/ws")
    async def ws(websocket: WebSocket):
        await websocket.accept()
        client = hub.register()
        loop = asyncio.get_running_loop()

        async def sender():
            while True:
                text = await loop.run_in_executor(None, client.get, 0.1)
                if client.dead:
                    break
                if text is not None:
                    await websocket.send_text(text)
            try:
                await websocket.close()
            except RuntimeError:
                pass  # already closed by the receive side

        sender_task = asyncio.create_task(sender())
        try:
            while True:
                raw = await websocket.receive_text()
                try:
                    cmd = json.loads(raw)
                except json.JSONDecodeError:
                    ack = {"ok": False, "msg": "control frame is not valid JSON"}
                else:
                    ack = apply_command(engine, cmd)
                await websocket.send_text(json.dumps(ack))
        except WebSocketDisconnect:
            pass
        finally:
            hub.unregister(client)
            sender_task.cancel()

    return app


class ServiceHandle:
    def __init__(self, server, thread: threading.Thread):
        self._server = server
        self._thread = thread

    def stop(self, timeout: float = 5.0) -> None:
        self._server.should_exit = True
        self._thread.join(timeout)


def serve(engine, hub: TelemetryHub, bind_address: str = DEFAULT_LISTEN) -> ServiceHandle:
    """Start the WebSocket/HTTP service on a background thread."""
    import uvicorn

    host, _, port_text = bind_address.rpartition(":")
    try:
        port = int(port_text)
    except ValueError as exc:
        raise IoError(f"bad bind address {bind_address!r}") from exc
    app = build_app(engine, hub)
    config = uvicorn.Config(app, host=host or "127.0.0.1", port=port, log_level="warning")
    server = uvicorn.Server(config)

    def run_server():
        try:
            server.run()
        except SystemExit:
            pass  # startup failure; detected below via thread death

    thread = threading.Thread(target=run_server, name="sirenedge-telemetry", daemon=True)
    thread.start()
    deadline = time.monotonic() + 5.0
    while not server.started:
        if not thread.is_alive():
            raise IoError(f"could not bind telemetry service on {bind_address}")
        if time.monotonic() > deadline:
            server.should_exit = True
            raise IoError(f"telemetry service startup timed out on {bind_address}")
        time.sleep(0.01)
    return ServiceHandle(server, thread)
