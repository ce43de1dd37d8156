import asyncio
import json
import os
import time

import pytest
from websockets.asyncio.client import connect

from pathbench.datasets import load_dataset
from pathbench.dynamics import VehicleParams
from pathbench.teleop import TeleopServer

PORT_BASE = 18940


async def start_server(tmp_path, port, **kwargs):
    server = TeleopServer(params=VehicleParams(), data_dir=str(tmp_path), **kwargs)
    ready = asyncio.Event()
    task = asyncio.create_task(server.run(port, ready))
    await asyncio.wait_for(ready.wait(), 5)
    return server, task


async def recv_until(ws, kind, timeout=5.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        msg = json.loads(await asyncio.wait_for(ws.recv(), timeout=timeout))
        if msg.get("type") == kind:
            return msg
    raise TimeoutError(f"no {kind!r} frame within {timeout}s")


async def latest_state(ws, timeout=5.0, drain_for=0.3):
    """Drain frames for a bounded time and return the freshest state frame."""
    msg = await recv_until(ws, "state", timeout)
    deadline = time.monotonic() + drain_for
    while time.monotonic() < deadline:
        try:
            nxt = json.loads(await asyncio.wait_for(ws.recv(), timeout=0.05))
        except asyncio.TimeoutError:
            break
        if nxt.get("type") == "state":
            msg = nxt
    return msg


def run(coro):
    return asyncio.run(coro)


class TestProtocol:
    def test_hello_and_trajectory_list(self, tmp_path):
        async def scenario():
            _, task = await start_server(tmp_path, PORT_BASE)
            try:
                async with connect(close_timeout=1, uri=f"ws://localhost:{PORT_BASE}/session") as ws:
                    hello = json.loads(await ws.recv())
                    assert hello["type"] == "hello"
                    assert hello["version"] == 1
                    assert len(hello["trajectories"]) == 7
            finally:
                task.cancel()
        run(scenario())

    def test_start_streams_path_once(self, tmp_path):
        async def scenario():
            _, task = await start_server(tmp_path, PORT_BASE + 1)
            try:
                async with connect(close_timeout=1, uri=f"ws://localhost:{PORT_BASE + 1}/session") as ws:
                    await ws.recv()  # hello
                    await ws.send(json.dumps({"type": "start",
                                              "trajectory": "circle_cw_5"}))
                    with_path = 0
                    for _ in range(6):
                        msg = await recv_until(ws, "state")
                        if "path" in msg:
                            with_path += 1
                            assert len(msg["path"]) > 100
                    assert with_path == 1
            finally:
                task.cancel()
        run(scenario())

    def test_command_clamping_warns(self, tmp_path):
        async def scenario():
            _, task = await start_server(tmp_path, PORT_BASE + 2)
            try:
                async with connect(close_timeout=1, uri=f"ws://localhost:{PORT_BASE + 2}/session") as ws:
                    await ws.recv()
                    await ws.send(json.dumps({"type": "cmd", "throttle": 2.0,
                                              "steering": 0.0}))
                    msg = await recv_until(ws, "warning")
                    assert "clamped" in msg["message"]
            finally:
                task.cancel()
        run(scenario())

    def test_unknown_type_keeps_session(self, tmp_path):
        async def scenario():
            _, task = await start_server(tmp_path, PORT_BASE + 3)
            try:
                async with connect(close_timeout=1, uri=f"ws://localhost:{PORT_BASE + 3}/session") as ws:
                    await ws.recv()
                    await ws.send(json.dumps({"type": "bogus"}))
                    msg = await recv_until(ws, "error")
                    assert "bogus" in msg["message"]
                    await ws.send("not json at all")
                    msg = await recv_until(ws, "error")
                    assert "JSON" in msg["message"]
                    # session still alive
                    await ws.send(json.dumps({"type": "start",
                                              "trajectory": "line_30"}))
                    assert (await recv_until(ws, "state"))["running"]
            finally:
                task.cancel()
        run(scenario())

    def test_record_without_start_errors(self, tmp_path):
        async def scenario():
            _, task = await start_server(tmp_path, PORT_BASE + 4)
            try:
                async with connect(close_timeout=1, uri=f"ws://localhost:{PORT_BASE + 4}/session") as ws:
                    await ws.recv()
                    await ws.send(json.dumps({"type": "record", "on": True}))
                    msg = await recv_until(ws, "error")
                    assert "start" in msg["message"]
            finally:
                task.cancel()
        run(scenario())

    def test_wrong_endpoint_rejected(self, tmp_path):
        async def scenario():
            _, task = await start_server(tmp_path, PORT_BASE + 5)
            try:
                async with connect(close_timeout=1, uri=f"ws://localhost:{PORT_BASE + 5}/other") as ws:
                    with pytest.raises(Exception):
                        await asyncio.wait_for(ws.recv(), timeout=3)
            finally:
                task.cancel()
        run(scenario())


class TestDrivingAndRecording:
    def test_scripted_drive_records_loadable_csv(self, tmp_path):
        async def scenario():
            _, task = await start_server(tmp_path, PORT_BASE + 6)
            try:
                async with connect(close_timeout=1, uri=f"ws://localhost:{PORT_BASE + 6}/session") as ws:
                    await ws.recv()
                    await ws.send(json.dumps({"type": "start",
                                              "trajectory": "circle_ccw_5"}))
                    await ws.send(json.dumps({"type": "record", "on": True}))
                    t0 = time.monotonic()
                    last = None
                    while time.monotonic() - t0 < 3.0:
                        await ws.send(json.dumps({"type": "cmd", "throttle": 0.7,
                                                  "steering": 0.2}))
                        try:
                            while True:
                                msg = json.loads(await asyncio.wait_for(
                                    ws.recv(), timeout=0.001))
                                if msg.get("type") == "state":
                                    last = msg
                        except asyncio.TimeoutError:
                            pass
                        await asyncio.sleep(0.02)
                    wall = time.monotonic() - t0
                    await ws.send(json.dumps({"type": "record", "on": False}))
                    rec = await recv_until(ws, "recorded")
                    assert rec["samples"] >= 25  # ~10 Hz for 3 s
                    assert last is not None and last["v"] > 0.1
                    drift = abs(last["t"] - wall) / wall
                    assert drift < 0.05
                    return rec["file"]
            finally:
                task.cancel()

        recorded = run(scenario())
        ds = load_dataset(recorded)
        assert all(s.source == "human-driver" for s in ds.samples)
        assert all(s.trajectory_id == "circle_ccw_5" for s in ds.samples)
        assert all(0.0 <= s.u.alpha <= 1.0 for s in ds.samples)

    def test_disconnect_flushes_partial_recording(self, tmp_path):
        async def scenario():
            _, task = await start_server(tmp_path, PORT_BASE + 7)
            try:
                async with connect(close_timeout=1, uri=f"ws://localhost:{PORT_BASE + 7}/session") as ws:
                    await ws.recv()
                    await ws.send(json.dumps({"type": "start", "trajectory": "line_30"}))
                    await ws.send(json.dumps({"type": "record", "on": True}))
                    await ws.send(json.dumps({"type": "cmd", "throttle": 0.5,
                                              "steering": 0.0}))
                    await asyncio.sleep(1.0)
                # context exit closes the socket mid-recording
                await asyncio.sleep(0.3)
            finally:
                task.cancel()
        run(scenario())
        files = [f for f in os.listdir(tmp_path) if f.endswith(".csv")]
        assert len(files) == 1
        ds = load_dataset(os.path.join(tmp_path, files[0]))
        assert len(ds) >= 5

    def test_sessions_isolated(self, tmp_path):
        async def scenario():
            _, task = await start_server(tmp_path, PORT_BASE + 8)
            try:
                async with connect(close_timeout=1, uri=f"ws://localhost:{PORT_BASE + 8}/session") as a, \
                        connect(f"ws://localhost:{PORT_BASE + 8}/session") as b:
                    await a.recv()
                    await b.recv()
                    await a.send(json.dumps({"type": "start", "trajectory": "line_30"}))
                    await a.send(json.dumps({"type": "cmd", "throttle": 1.0,
                                             "steering": 0.0}))
                    await asyncio.sleep(1.2)
                    sa = await latest_state(a)
                    sb = await latest_state(b)
                    assert sa["v"] > 0.3  # session A accelerated
                    assert sb["v"] == 0.0  # session B untouched
                    assert not sb["running"]
            finally:
                task.cancel()
        run(scenario())

    def test_deadman_decays_throttle(self, tmp_path):
        async def scenario():
            _, task = await start_server(tmp_path, PORT_BASE + 9)
            try:
                async with connect(close_timeout=1, uri=f"ws://localhost:{PORT_BASE + 9}/session") as ws:
                    await ws.recv()
                    await ws.send(json.dumps({"type": "start", "trajectory": "line_30"}))
                    await ws.send(json.dumps({"type": "cmd", "throttle": 1.0,
                                              "steering": 0.0}))
                    await asyncio.sleep(0.8)
                    v_driving = (await latest_state(ws))["v"]
                    # stop sending commands; the dead-man cuts the throttle
                    # and the weak drivetrain drag stops accelerating
                    await asyncio.sleep(2.5)
                    v_coasting = (await latest_state(ws))["v"]
                    assert v_driving > 0.2
                    assert v_coasting <= v_driving + 0.02
            finally:
                task.cancel()
        run(scenario())


class TestStaticUi:
    def test_serves_ui_files(self, tmp_path):
        ui = tmp_path / "ui"
        ui.mkdir()
        (ui / "index.html").write_text("<html>workbench</html>")

        async def scenario():
            _, task = await start_server(tmp_path, PORT_BASE + 10, ui_dir=str(ui))
            try:
                import urllib.request

                def fetch(path):
                    with urllib.request.urlopen(
                            f"http://localhost:{PORT_BASE + 10}{path}") as resp:
                        return resp.status, resp.read()

                status, body = await asyncio.to_thread(fetch, "/")
                assert status == 200 and b"workbench" in body
                with pytest.raises(Exception):
                    await asyncio.to_thread(fetch, "/../secret")
            finally:
                task.cancel()
        run(scenario())
