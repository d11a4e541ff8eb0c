"""Deterministic fixed-step simulation loop.

Wires the drive firmware, the world plant, the supervisor, and (optionally)
the navigator together on a single 0.01 s base tick. Every tick executes the
same phases in the same order, which is the whole determinism contract:

    1. deliver bus traffic queued during the previous tick
    2. drive firmware step (100 Hz)
    3. world physics step (100 Hz)
    4. supervisor step on every 2nd tick (50 Hz)
    5. laser scan + navigation update on every 10th tick (10 Hz)

External inputs (scripts, the bridge) enter through a queue and are consumed
only at tick boundaries. All inter-component frames cross the loop as wire
bytes, so the transport encoding is exercised on every hop.
"""

from __future__ import annotations

import hashlib
from collections import deque
from typing import Callable, Iterable, List, NamedTuple, Optional

from .bus import Frame, deserialize_frame, serialize_frame
from .drive import DriveUnit
from .navigation import Navigator
from .supervisor import SUPERVISOR_DT, Supervisor, TickInputs
from .world import LaserScan, World

LOOP_DT = 0.01
SUPERVISOR_DIVISOR = 2        # 50 Hz
SENSE_DIVISOR = 10            # 10 Hz laser + navigation

TRAJECTORY_HEADER = "t,x,y,theta,mode,battery_v,collisions"


class TrajectoryRow(NamedTuple):
    t: float
    x: float
    y: float
    theta: float
    mode: str
    battery_v: float
    collisions: int


def trajectory_csv_lines(rows: Iterable[TrajectoryRow]):
    """Canonical CSV rendering; also the hashing preimage."""
    yield TRAJECTORY_HEADER
    for r in rows:
        yield "%.6f,%.6f,%.6f,%.6f,%s,%.6f,%d" % r


def trajectory_hash(rows: Iterable[TrajectoryRow]) -> str:
    h = hashlib.sha256()
    for line in trajectory_csv_lines(rows):
        h.update(line.encode("ascii"))
        h.update(b"\n")
    return h.hexdigest()


def hash_csv_text(lines: Iterable[str]) -> str:
    """Hash already-rendered CSV lines (header + data, comments excluded)."""
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("ascii"))
        h.update(b"\n")
    return h.hexdigest()


class SimLoop:
    """Single-stepped composition of plant, firmware, and controllers."""

    def __init__(self, world: World, drive: DriveUnit, supervisor: Supervisor,
                 navigator: Optional[Navigator] = None):
        self.world = world
        self.drive = drive
        self.supervisor = supervisor
        self.navigator = navigator
        self.tick = 0
        self.trajectory: List[TrajectoryRow] = []
        self.last_scan: Optional[LaserScan] = None
        self.on_sense: Optional[Callable[["SimLoop"], None]] = None
        self._commands: deque = deque()
        self._wire_to_drive: List[bytes] = []
        self._wire_to_supervisor: List[bytes] = []
        self._sup_inbox: List[Frame] = []
        self._events: List = []
        self._joystick: Optional[tuple] = None
        self._auto_cmd = None

    def enqueue(self, kind: str, payload=None) -> None:
        """Queue one external input for the next tick boundary.

        kinds: "event" with (name, arg) or a bare name, "joystick" with
        (x, y) axes, "auto_cmd" with a Twist2D, "goal" with a target Pose2D
        for the navigator (plans from the supervisor's current pose estimate;
        planner errors propagate out of the step that drains it). Appending
        is atomic, so other threads (the bridge) may call this concurrently.
        """
        self._commands.append((kind, payload))

    def _drain_commands(self) -> None:
        while self._commands:
            kind, payload = self._commands.popleft()
            if kind == "event":
                self._events.append(payload)
            elif kind == "joystick":
                self._joystick = payload
            elif kind == "auto_cmd":
                self._auto_cmd = payload
            elif kind == "goal":
                if self.navigator is not None:
                    self.navigator.set_goal(self.supervisor.state.pose, payload)
            else:
                raise ValueError(f"unknown command kind: {kind!r}")

    def step(self) -> None:
        """Advance exactly one 0.01 s tick."""
        self._drain_commands()

        # 1. deliver last tick's wire traffic
        drive_inbox = [deserialize_frame(b) for b in self._wire_to_drive]
        self._wire_to_drive.clear()
        self._sup_inbox.extend(
            deserialize_frame(b) for b in self._wire_to_supervisor)
        self._wire_to_supervisor.clear()

        # 2. firmware
        for frame in self.drive.step(drive_inbox, LOOP_DT):
            self._wire_to_supervisor.append(serialize_frame(frame))

        # 3. plant follows the firmware's wheel speeds
        self.world.step(self.drive.left.rpm, self.drive.right.rpm, LOOP_DT)

        # 4. supervisor consumes queued inputs and accumulated frames
        if (self.tick + 1) % SUPERVISOR_DIVISOR == 0:
            inputs = TickInputs(events=tuple(self._events),
                                joystick=self._joystick,
                                auto_cmd=self._auto_cmd,
                                frames=tuple(self._sup_inbox))
            self._events.clear()
            self._joystick = None
            self._auto_cmd = None
            self._sup_inbox.clear()
            for frame in self.supervisor.step(inputs, SUPERVISOR_DT):
                self._wire_to_drive.append(serialize_frame(frame))

        # 5. sense and steer; the navigator only feeds the supervisor queue
        if (self.tick + 1) % SENSE_DIVISOR == 0:
            scan = self.world.scan()
            self.last_scan = scan
            if self.navigator is not None:
                self._auto_cmd = self.navigator.update(
                    self.supervisor.state.pose, scan)
            if self.on_sense is not None:
                self.on_sense(self)

        self.tick += 1
        self.trajectory.append(TrajectoryRow(
            self.world.time, self.world.pose.x, self.world.pose.y,
            self.world.pose.theta, self.supervisor.state.mode.value,
            self.supervisor.state.battery_v, self.world.collision_count))

    def run(self, n_ticks: int,
            script: Optional[Callable[[int], Iterable[tuple]]] = None
            ) -> List[TrajectoryRow]:
        """Run n ticks; script(tick) may yield (kind, payload) inputs."""
        for _ in range(n_ticks):
            if script is not None:
                for cmd in script(self.tick):
                    self.enqueue(*cmd)
            self.step()
        return self.trajectory

    def run_until(self, condition: Callable[[], bool], max_ticks: int,
                  script: Optional[Callable[[int], Iterable[tuple]]] = None
                  ) -> bool:
        """Step until condition() holds; False when the budget runs out."""
        for _ in range(max_ticks):
            if script is not None:
                for cmd in script(self.tick):
                    self.enqueue(*cmd)
            self.step()
            if condition():
                return True
        return False
