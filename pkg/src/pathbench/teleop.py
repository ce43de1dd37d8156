"""Human-in-the-loop simulation service over WebSocket.

Each connection to the `/session` endpoint owns one simulation session.
The loop advances the physics in real time (wall-clock paced at SIM_DT)
and broadcasts JSON state frames at the configured tick rate. The client
latches commands (`cmd` frames, latest wins) which are applied at control
steps (CONTROL_DT); if no command arrives for 0.5 s the throttle ramps to
zero as a dead-man safety while steering holds. With recording on, (error
state, applied command) pairs are appended at every control step and
flushed to the imitation dataset CSV schema (source=human-driver) when
recording stops, the episode ends, or the client disconnects.

Wire protocol (JSON text frames):
  server -> client:
    {"type": "hello", "version": 1, "trajectories": [...]}
    {"type": "state", "t", "x", "y", "theta", "v", "e": [e1..e4],
     "ref": {"x","y","theta"}, "recording": bool, "samples": int,
     "running": bool, "path": [[x,y], ...]}   # path only once per episode
    {"type": "warning"|"error", "message": str}
    {"type": "recorded", "file": str, "samples": int}
  client -> server:
    {"type": "start", "trajectory": name}
    {"type": "cmd", "throttle": float, "steering": float}
    {"type": "record", "on": bool}
    {"type": "stop"}
"""

from __future__ import annotations

import asyncio
import itertools
import json
import os
import time

from websockets.asyncio.server import serve as ws_serve
from websockets.datastructures import Headers
from websockets.exceptions import ConnectionClosed
from websockets.http11 import Response

from .datasets import CSV_HEADER, canonical_trajectories
from .dynamics import SIM_DT, ControlCommand, VehicleParams, VehicleState, step
from .loop import CONTROL_DT, DEFAULT_LOOKAHEAD, STEPS_PER_CONTROL
from .paths import error_state, reference_point

__all__ = ["TeleopServer", "serve_forever"]

TICK_RATE = 50.0  # state broadcasts per second
DEADMAN_TIMEOUT = 0.5  # [s] without a cmd frame before throttle decays
THROTTLE_DECAY = 2.0  # [1/s] dead-man throttle ramp toward zero
PROTOCOL_VERSION = 1

_session_counter = itertools.count(1)


class _Session:
    """State of one connection: vehicle, latched command, recording buffer."""

    def __init__(self, server: "TeleopServer"):
        self.server = server
        self.id = next(_session_counter)
        self.path = None
        self.path_name = None
        self.state = VehicleState(0.0, 0.0, 0.0, 0.0)
        self.steps_done = 0  # physics steps since episode start
        self.recording = False
        self.rows: list[str] = []
        self.samples_recorded = 0
        self.flush_count = 0
        self.throttle = 0.0
        self.steering = 0.0
        self.last_cmd_time: float | None = None
        self.applied = ControlCommand(0.0, 0.0)
        self.running = False
        self.path_sent = False

    @property
    def sim_time(self) -> float:
        return self.steps_done * SIM_DT

    def start_episode(self, name: str) -> None:
        path = self.server.trajectories.get(name)
        if path is None:
            raise ValueError(f"unknown trajectory {name!r}; "
                             f"choose one of {sorted(self.server.trajectories)}")
        self.flush_recording()
        self.recording = False
        self.path = path
        self.path_name = name
        p0 = path.point(0)
        self.state = VehicleState(p0.x, p0.y, p0.theta, 0.0)
        self.steps_done = 0
        self.throttle = 0.0
        self.steering = 0.0
        self.applied = ControlCommand(0.0, 0.0)
        self.running = True
        self.path_sent = False

    def stop_episode(self) -> str | None:
        self.running = False
        self.recording = False
        return self.flush_recording()

    def latch_command(self, throttle: float, steering: float) -> list[str]:
        warnings = []
        if not 0.0 <= throttle <= 1.0:
            warnings.append(f"throttle {throttle} clamped to [0, 1]")
        if not -1.0 <= steering <= 1.0:
            warnings.append(f"steering {steering} clamped to [-1, 1]")
        self.throttle = min(1.0, max(0.0, throttle))
        self.steering = min(1.0, max(-1.0, steering))
        self.last_cmd_time = time.monotonic()
        return warnings

    def control_boundary(self) -> None:
        """Refresh the applied command and record the sample for this step."""
        if (self.last_cmd_time is None
                or time.monotonic() - self.last_cmd_time > DEADMAN_TIMEOUT):
            self.throttle = max(0.0, self.throttle - THROTTLE_DECAY * CONTROL_DT)
        self.applied = ControlCommand(alpha=self.throttle, beta=self.steering)
        if self.recording and self.path is not None:
            ref = reference_point(self.path, self.state, self.server.lookahead)
            e = error_state(self.state, ref)
            u = self.applied
            self.rows.append(
                f"{self.sim_time!r},{e.e1!r},{e.e2!r},{e.e3!r},{e.e4!r},"
                f"{u.alpha!r},{u.beta!r},human-driver,{self.path_name}")
            self.samples_recorded += 1

    def physics_tick(self) -> None:
        if not self.running:
            return
        if self.steps_done % STEPS_PER_CONTROL == 0:
            self.control_boundary()
        self.state = step(self.state, self.applied, self.server.params, SIM_DT)
        self.steps_done += 1

    def state_frame(self) -> dict:
        frame = {
            "type": "state",
            "t": round(self.sim_time, 6),
            "x": self.state.x, "y": self.state.y,
            "theta": self.state.theta, "v": self.state.v,
            "e": [0.0, 0.0, 0.0, 0.0], "ref": None,
            "recording": self.recording,
            "samples": self.samples_recorded,
            "running": self.running,
        }
        if self.path is not None:
            ref = reference_point(self.path, self.state, self.server.lookahead)
            e = error_state(self.state, ref)
            frame["e"] = [e.e1, e.e2, e.e3, e.e4]
            frame["ref"] = {"x": ref.x, "y": ref.y, "theta": ref.theta}
            if not self.path_sent:
                frame["path"] = [[round(a, 4), round(b, 4)]
                                 for a, b in zip(self.path.x.tolist(), self.path.y.tolist())]
                self.path_sent = True
        return frame

    def flush_recording(self) -> str | None:
        """Write buffered samples to disk; returns the file name, if any."""
        if not self.rows:
            return None
        os.makedirs(self.server.data_dir, exist_ok=True)
        self.flush_count += 1
        name = f"teleop_s{self.id}_{self.path_name}_{self.flush_count}.csv"
        out = os.path.join(self.server.data_dir, name)
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(CSV_HEADER + "\n")
            fh.write("\n".join(self.rows) + "\n")
        meta = {"source": "human-driver", "dt": CONTROL_DT,
                "params_hash": self.server.params.digest(),
                "trajectory": self.path_name, "session": self.id}
        with open(out + ".meta.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, sort_keys=True)
            fh.write("\n")
        self.rows = []
        return out


class TeleopServer:
    """Owns the shared configuration; one `_Session` per connection."""

    def __init__(self, params: VehicleParams | None = None,
                 data_dir: str = "teleop_data",
                 ui_dir: str | None = None,
                 lookahead: float = DEFAULT_LOOKAHEAD,
                 tick_rate: float = TICK_RATE):
        self.params = params or VehicleParams()
        self.data_dir = data_dir
        self.ui_dir = ui_dir
        self.lookahead = lookahead
        self.tick_rate = tick_rate
        self.trajectories = canonical_trajectories(self.params)

    async def handle_connection(self, websocket) -> None:
        if websocket.request.path.split("?")[0] != "/session":
            await websocket.close(code=1008, reason="connect to /session")
            return
        session = _Session(self)
        await websocket.send(json.dumps({
            "type": "hello", "version": PROTOCOL_VERSION,
            "trajectories": sorted(self.trajectories),
        }))
        loop_task = asyncio.create_task(self._simulation_loop(websocket, session))
        try:
            async for raw in websocket:
                reply = self._handle_message(session, raw)
                if reply is not None:
                    await websocket.send(json.dumps(reply))
        except ConnectionClosed:
            pass
        finally:
            loop_task.cancel()
            try:
                await loop_task
            except asyncio.CancelledError:
                pass
            session.stop_episode()  # flushes any partial recording

    def _handle_message(self, session: _Session, raw) -> dict | None:
        try:
            msg = json.loads(raw)
        except (json.JSONDecodeError, TypeError):
            return {"type": "error", "message": "malformed JSON frame"}
        if not isinstance(msg, dict):
            return {"type": "error", "message": "frame must be a JSON object"}
        kind = msg.get("type")
        try:
            if kind == "start":
                session.start_episode(str(msg.get("trajectory", "")))
                return None
            if kind == "cmd":
                warnings = session.latch_command(float(msg.get("throttle", 0.0)),
                                                 float(msg.get("steering", 0.0)))
                if warnings:
                    return {"type": "warning", "message": "; ".join(warnings)}
                return None
            if kind == "record":
                on = bool(msg.get("on"))
                if on and not session.running:
                    return {"type": "error",
                            "message": "recording needs an active trajectory; send start first"}
                if not on and session.recording:
                    session.recording = False
                    out = session.flush_recording()
                    if out:
                        return {"type": "recorded", "file": out,
                                "samples": session.samples_recorded}
                    return None
                session.recording = on
                return None
            if kind == "stop":
                out = session.stop_episode()
                if out:
                    return {"type": "recorded", "file": out,
                            "samples": session.samples_recorded}
                return None
        except (ValueError, TypeError) as exc:
            return {"type": "error", "message": str(exc)}
        return {"type": "error", "message": f"unknown message type {kind!r}"}

    async def _simulation_loop(self, websocket, session: _Session) -> None:
        """Wall-clock paced stepping with absolute scheduling (no drift).

        Frames are sent through a single in-flight task and dropped while
        the previous send has not completed, so a client that stops reading
        stalls its own frame stream but never the simulation or recording.
        """
        start = time.monotonic()
        done = 0  # physics steps issued, running or not
        frame_period = 1.0 / self.tick_rate
        next_frame = 0.0
        send_task: asyncio.Task | None = None
        try:
            while True:
                now = time.monotonic() - start
                target = int(now / SIM_DT)
                while done < target:
                    session.physics_tick()
                    done += 1
                if now >= next_frame:
                    if send_task is None or send_task.done():
                        if send_task is not None and (send_task.cancelled()
                                                      or send_task.exception() is not None):
                            return  # connection went away
                        send_task = asyncio.create_task(
                            websocket.send(json.dumps(session.state_frame())))
                    next_frame += frame_period
                    if now >= next_frame:  # fell behind: drop missed frames
                        next_frame = (int(now / frame_period) + 1) * frame_period
                now = time.monotonic() - start
                wake = min((done + 1) * SIM_DT, next_frame)
                await asyncio.sleep(max(0.0, wake - now))
        finally:
            if send_task is not None and not send_task.done():
                send_task.cancel()
                try:
                    await send_task
                except (asyncio.CancelledError, ConnectionClosed):
                    pass

    def _process_request(self, connection, request):
        """Serve static UI files on plain HTTP requests when configured."""
        if "Upgrade" in request.headers:
            return None
        if self.ui_dir is None:
            return connection.respond(404, "WebSocket endpoint only\n")
        rel = request.path.split("?")[0].lstrip("/") or "index.html"
        base = os.path.normpath(os.path.abspath(self.ui_dir))
        target = os.path.normpath(os.path.join(base, rel))
        if not target.startswith(base + os.sep) or not os.path.isfile(target):
            return connection.respond(404, "not found\n")
        content_type = {
            ".html": "text/html; charset=utf-8", ".js": "text/javascript",
            ".css": "text/css", ".map": "application/json",
            ".svg": "image/svg+xml",
        }.get(os.path.splitext(target)[1], "application/octet-stream")
        with open(target, "rb") as fh:
            body = fh.read()
        headers = Headers([("Content-Type", content_type),
                           ("Content-Length", str(len(body)))])
        return Response(200, "OK", headers, body)

    async def run(self, port: int, ready: asyncio.Event | None = None) -> None:
        async with ws_serve(self.handle_connection, host=None, port=port,
                            process_request=self._process_request):
            if ready is not None:
                ready.set()
            await asyncio.get_running_loop().create_future()  # until cancelled


def serve_forever(port: int, data_dir: str, params: VehicleParams | None = None,
                  ui_dir: str | None = None,
                  lookahead: float = DEFAULT_LOOKAHEAD) -> None:
    server = TeleopServer(params=params, data_dir=data_dir, ui_dir=ui_dir,
                          lookahead=lookahead)
    print(f"teleop service on ws://localhost:{port}/session (data -> {data_dir})")
    try:
        asyncio.run(server.run(port))
    except KeyboardInterrupt:
        pass
