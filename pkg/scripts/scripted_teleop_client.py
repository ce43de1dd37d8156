#!/usr/bin/env python3
"""Scripted WebSocket client for the teleop service.

Drives `cmd` frames at 50 Hz for a configurable duration with recording on,
then reports the recorded file and the simulated-vs-wall clock drift. Used
to exercise the human-in-the-loop path without a human.
"""

import argparse
import asyncio
import json
import math
import time

from websockets.asyncio.client import connect


async def drive(url: str, trajectory: str, duration: float) -> None:
    async with connect(url) as ws:
        hello = json.loads(await ws.recv())
        print("server:", hello)
        await ws.send(json.dumps({"type": "start", "trajectory": trajectory}))
        await ws.send(json.dumps({"type": "record", "on": True}))
        t0 = time.monotonic()
        last_state = None
        while time.monotonic() - t0 < duration:
            elapsed = time.monotonic() - t0
            steering = 0.3 * math.sin(0.5 * elapsed)
            await ws.send(json.dumps({"type": "cmd", "throttle": 0.6,
                                      "steering": steering}))
            try:
                while True:
                    msg = json.loads(await asyncio.wait_for(ws.recv(), timeout=0.001))
                    if msg.get("type") == "state":
                        last_state = msg
            except asyncio.TimeoutError:
                pass
            await asyncio.sleep(0.02)
        wall = time.monotonic() - t0
        await ws.send(json.dumps({"type": "record", "on": False}))
        while True:
            msg = json.loads(await ws.recv())
            if msg.get("type") == "recorded":
                print(f"recorded {msg['samples']} samples -> {msg['file']}")
                break
        if last_state is not None:
            drift = abs(last_state["t"] - wall) / wall
            print(f"sim time {last_state['t']:.2f} s vs wall {wall:.2f} s "
                  f"(drift {100 * drift:.2f}%)")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--url", default="ws://localhost:8700/session")
    ap.add_argument("--trajectory", default="circle_ccw_5")
    ap.add_argument("--duration", type=float, default=60.0)
    args = ap.parse_args()
    asyncio.run(drive(args.url, args.trajectory, args.duration))


if __name__ == "__main__":
    main()
