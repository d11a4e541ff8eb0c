"""Line-delimited JSON socket bridge for remote consoles.

One TCP listener. Each client exchanges newline-delimited UTF-8 JSON with
the simulation: inbound lines become loop queue entries (so every state
change lands on a tick boundary no matter when the bytes arrive), and a
telemetry snapshot goes out to every client at the loop's sense rate.

Inbound message types:

    {"type": "joystick", "x": -1..1, "y": -1..1}
    {"type": "function_key", "k": 1|2|3}
    {"type": "estop"}
    {"type": "estop_reset"}
    {"type": "set_mode", "mode": "manual"|"auto"}
    {"type": "start_routine", "name": "<label>"}

Outbound:

    {"type": "map", resolution, width, height, rows: ["#..#", ...],
     markers: {label: {x, y}}}                          (once, on connect)
    {"type": "telemetry", t, pose: {x, y, theta}, mode, speed_level,
     battery_v, scan: [90 ranges], phases: [...]}       (10 Hz)
    {"type": "error", "reason": "..."}                  (on a bad message)

A malformed line earns an error reply; the connection stays open. A routine
name is a map marker label; starting one switches to autonomous mode and
plans a path to that marker.
"""

from __future__ import annotations

import json
import socket
import threading
import time
from collections import Counter
from typing import Dict, List, Optional

from .kinematics import Pose2D
from .loop import LOOP_DT, SimLoop
from .navigation import InvalidEndpointError, NoPathError
from .scenario import GOAL_YAWS
from .supervisor import (EVENT_ESTOP_PRESSED, EVENT_ESTOP_RESET,
                         EVENT_FUNCTION_KEY, EVENT_SET_MODE)

SCAN_DECIMATION = 4             # 360 beams -> 90 on the wire
SEND_TIMEOUT_S = 0.5            # slow readers get dropped, never waited on
ACCEPT_POLL_S = 0.2


class ProtocolError(ValueError):
    """Well-formed JSON that violates the message contract."""


def _encode(msg: dict) -> bytes:
    return (json.dumps(msg, separators=(",", ":")) + "\n").encode("utf-8")


def _axis(msg: dict, key: str) -> float:
    v = msg.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProtocolError(f"joystick {key!r} must be a number")
    return max(-1.0, min(1.0, float(v)))


class _Client:
    def __init__(self, conn: socket.socket, addr):
        self.conn = conn
        self.addr = addr
        self.alive = True
        self._lock = threading.Lock()

    def send(self, payload: bytes) -> bool:
        with self._lock:
            if not self.alive:
                return False
            try:
                self.conn.sendall(payload)
                return True
            except OSError:
                self.alive = False
                return False

    def close(self) -> None:
        with self._lock:
            self.alive = False
            try:
                self.conn.close()
            except OSError:
                pass


class BridgeServer:
    """Socket front end over a SimLoop.

    The server threads only touch the loop through enqueue(); the loop
    thread (whoever calls run()) is the only mutator of simulation state.
    Telemetry is built inside the loop's sense hook and broadcast as an
    immutable encoded line.
    """

    def __init__(self, loop: SimLoop, host: str = "127.0.0.1", port: int = 0,
                 realtime: bool = True,
                 routines: Optional[Dict[str, Pose2D]] = None):
        self.loop = loop
        self.realtime = realtime
        if routines is None:
            routines = {
                label.lower(): Pose2D(p.x, p.y, GOAL_YAWS.get(label, 0.0))
                for label, p in loop.world.grid.named_poses.items()}
        self.routines = {str(k).lower(): v for k, v in routines.items()}
        self.phases: List[dict] = []       # host-provided, echoed verbatim
        # best-effort diagnostics; handy for tests and debugging
        self.lines_received = 0
        self.received: Counter = Counter()
        self.telemetry_sent = 0
        self._host = host
        self._port = port
        self._listener: Optional[socket.socket] = None
        self._clients: List[_Client] = []
        self._clients_lock = threading.Lock()
        self._stop = threading.Event()
        self._prev_on_sense = None

    @property
    def port(self) -> int:
        return self._listener.getsockname()[1]

    def start(self) -> "BridgeServer":
        self._listener = socket.create_server((self._host, self._port))
        self._listener.settimeout(ACCEPT_POLL_S)
        self._prev_on_sense = self.loop.on_sense
        self.loop.on_sense = self._on_sense
        threading.Thread(target=self._accept_loop, daemon=True).start()
        return self

    def run(self, max_ticks: Optional[int] = None) -> None:
        """Drive the simulation until stop(); pace to wall clock if realtime."""
        stepped = 0
        deadline = time.monotonic()
        while not self._stop.is_set():
            if max_ticks is not None and stepped >= max_ticks:
                return
            try:
                self.loop.step()
            except (NoPathError, InvalidEndpointError) as exc:
                # a routine goal that cannot be planned must not kill the
                # service; the tick replays on the next iteration
                self._broadcast({"type": "error",
                                 "reason": f"routine failed: {exc}"})
                continue
            stepped += 1
            if self.realtime:
                deadline += LOOP_DT
                delay = deadline - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                else:
                    deadline = time.monotonic()   # fell behind; do not sprint

    def stop(self) -> None:
        self._stop.set()
        if self.loop.on_sense is self._on_sense:
            self.loop.on_sense = self._prev_on_sense
        with self._clients_lock:
            clients = list(self._clients)
            self._clients.clear()
        for c in clients:
            c.close()
        if self._listener is not None:
            self._listener.close()

    # -- socket side ---------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            conn.settimeout(SEND_TIMEOUT_S)
            try:
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            except OSError:
                pass
            client = _Client(conn, addr)
            client.send(_encode(self._map_message()))
            with self._clients_lock:
                self._clients.append(client)
            threading.Thread(target=self._reader, args=(client,),
                             daemon=True).start()

    def _reader(self, client: _Client) -> None:
        buf = b""
        while not self._stop.is_set() and client.alive:
            try:
                chunk = client.conn.recv(4096)
            except socket.timeout:
                continue
            except OSError:
                break
            if not chunk:
                break
            buf += chunk
            while b"\n" in buf:
                line, buf = buf.split(b"\n", 1)
                if not line.strip():
                    continue
                self.lines_received += 1
                reply = self._handle_line(line)
                if reply is not None:
                    client.send(_encode(reply))
        self._drop(client)

    def _drop(self, client: _Client) -> None:
        with self._clients_lock:
            if client in self._clients:
                self._clients.remove(client)
        client.close()

    # -- message handling ------------------------------------------------

    def _handle_line(self, raw: bytes) -> Optional[dict]:
        try:
            msg = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            return {"type": "error", "reason": f"unparseable message: {exc}"}
        if not isinstance(msg, dict):
            return {"type": "error", "reason": "message must be a JSON object"}
        try:
            self._dispatch(msg)
        except ProtocolError as exc:
            return {"type": "error", "reason": str(exc)}
        return None

    def _dispatch(self, msg: dict) -> None:
        mtype = msg.get("type")
        if mtype == "joystick":
            self.loop.enqueue("joystick", (_axis(msg, "x"), _axis(msg, "y")))
        elif mtype == "estop":
            self.loop.enqueue("event", (EVENT_ESTOP_PRESSED, None))
        elif mtype == "estop_reset":
            self.loop.enqueue("event", (EVENT_ESTOP_RESET, None))
        elif mtype == "set_mode":
            mode = msg.get("mode")
            if mode not in ("manual", "auto"):
                raise ProtocolError(
                    f"set_mode expects 'manual' or 'auto', got {mode!r}")
            self.loop.enqueue("event", (EVENT_SET_MODE, mode))
        elif mtype == "function_key":
            k = msg.get("k")
            if isinstance(k, bool) or not isinstance(k, int) or not 1 <= k <= 3:
                raise ProtocolError("function_key expects integer k in 1..3")
            self.loop.enqueue("event", (EVENT_FUNCTION_KEY, k))
        elif mtype == "start_routine":
            name = str(msg.get("name", "")).lower()
            goal = self.routines.get(name)
            if goal is None:
                known = ", ".join(sorted(self.routines)) or "none"
                raise ProtocolError(
                    f"unknown routine {name!r} (available: {known})")
            self.loop.enqueue("event", (EVENT_SET_MODE, "auto"))
            self.loop.enqueue("goal", goal)
        else:
            raise ProtocolError(f"unknown message type {mtype!r}")
        self.received[mtype] += 1

    # -- outbound --------------------------------------------------------

    def _on_sense(self, loop: SimLoop) -> None:
        if self._prev_on_sense is not None:
            self._prev_on_sense(loop)
        self._broadcast(self._telemetry(loop))
        self.telemetry_sent += 1

    def _telemetry(self, loop: SimLoop) -> dict:
        st = loop.supervisor.state
        ranges: list = []
        if loop.last_scan is not None:
            ranges = [round(float(r), 3)
                      for r in loop.last_scan.ranges[::SCAN_DECIMATION]]
        return {
            "type": "telemetry",
            "t": round(loop.world.time, 3),
            "pose": {"x": round(st.pose.x, 4), "y": round(st.pose.y, 4),
                     "theta": round(st.pose.theta, 4)},
            "mode": st.mode.value,
            "speed_level": st.speed_level,
            "battery_v": round(st.battery_v, 3),
            "scan": ranges,
            "phases": list(self.phases),
        }

    def _map_message(self) -> dict:
        grid = self.loop.world.grid
        rows = ["".join("#" if c else "." for c in row)
                for row in grid.occupied]
        markers = {label: {"x": round(p.x, 4), "y": round(p.y, 4)}
                   for label, p in grid.named_poses.items()}
        return {"type": "map", "resolution": grid.resolution,
                "width": grid.width, "height": grid.height,
                "rows": rows, "markers": markers}

    def _broadcast(self, msg: dict) -> None:
        payload = _encode(msg)
        dead = []
        with self._clients_lock:
            clients = list(self._clients)
        for c in clients:
            if not c.send(payload):
                dead.append(c)
        for c in dead:
            self._drop(c)


def serve_bridge(loop: SimLoop, host: str = "127.0.0.1", port: int = 0,
                 realtime: bool = True,
                 routines: Optional[Dict[str, Pose2D]] = None) -> BridgeServer:
    """Start accepting clients; the caller drives ticks via .run()."""
    return BridgeServer(loop, host, port, realtime, routines).start()
