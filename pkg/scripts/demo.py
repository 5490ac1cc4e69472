#!/usr/bin/env python3
"""Desk demo: one server, two simulated buoys, one armed fence.

Boots a control center on throwaway ports, arms a small square fence
around the harbor route, drives two terminals for a minute, and prints
every live event as it arrives on the push channel.  One buoy wanders out
of the fence, so expect exit alarms among the position stream.

Usage: python scripts/demo.py [seconds]
"""

import asyncio
import dataclasses
import json
import socket
import sys
import tempfile
import threading
import time
from pathlib import Path

from websockets.sync.client import connect as ws_connect

from buoytrack.devicesim import Route, run_simulator
from buoytrack.geofence import Geofence
from buoytrack.service import ControlCenter, ServerConfig

ROUTE_PATH = Path(__file__).parent / "routes" / "harbor_loop.json"


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def main(run_for_s: float = 60.0) -> None:
    config = ServerConfig(tcp_port=free_port(), http_port=free_port(),
                          data_dir=Path(tempfile.mkdtemp(prefix="buoytrack-demo-")))
    center = ControlCenter(config)

    # Fence around the first half of the loop; the route's east leg exits it.
    center.store.save_fence(Geofence(
        id="harbor", name="harbor box",
        vertices=((60.149, 4.999), (60.156, 4.999), (60.156, 5.006), (60.149, 5.006))))

    loop_box = {}

    def serve():
        loop_box["loop"] = asyncio.new_event_loop()
        asyncio.set_event_loop(loop_box["loop"])
        loop_box["loop"].run_until_complete(center.serve())

    threading.Thread(target=serve, daemon=True).start()
    deadline = time.time() + 10
    while time.time() < deadline:
        try:
            socket.create_connection(("127.0.0.1", config.http_port), timeout=0.2).close()
            break
        except OSError:
            time.sleep(0.05)

    # Same loop as the sample file, hurried up so a one-minute demo
    # reaches the fence-exit leg.
    route = dataclasses.replace(Route.load(ROUTE_PATH), speed_knots=64.0)
    for i, imei in enumerate(("100000000000001", "100000000000002")):
        threading.Thread(
            target=run_simulator,
            args=("127.0.0.1", config.tcp_port, imei, route, int(run_for_s)),
            kwargs=dict(interval_s=1.0, registration_delay_s=0.3 + 0.2 * i,
                        gprs_attach_delay_s=0.3, fix_delay_s=0.2),
            daemon=True,
        ).start()

    print(f"live feed from ws://127.0.0.1:{config.http_port}/ws/live "
          f"(API on http://127.0.0.1:{config.http_port}/api/terminals)")
    stop_at = time.time() + run_for_s
    with ws_connect(f"ws://127.0.0.1:{config.http_port}/ws/live") as ws:
        while time.time() < stop_at:
            try:
                event = json.loads(ws.recv(timeout=max(0.1, stop_at - time.time())))
            except TimeoutError:
                break
            if event["type"] == "position":
                p = event["payload"]
                print(f"{event['terminal']}  pos   #{p['seq']:<4d} "
                      f"{p['lat']:.5f},{p['lon']:.5f}  {p['speed_knots']:.1f} kn")
            elif event["type"] == "alarm":
                a = event["payload"]
                print(f"{event['terminal']}  ALARM {a['kind']} fence={a['fence_id']} "
                      f"at {a['lat']:.5f},{a['lon']:.5f}")
            else:
                print(f"{event['terminal']}  {'online' if event['payload']['online'] else 'offline'}")

    alarms = center.store.list_alarms()
    print(f"\n{len(alarms)} alarm(s) persisted; journal in {config.data_dir}")
    loop_box["loop"].call_soon_threadsafe(center.request_stop)
    time.sleep(0.5)


if __name__ == "__main__":
    main(float(sys.argv[1]) if len(sys.argv) > 1 else 60.0)
