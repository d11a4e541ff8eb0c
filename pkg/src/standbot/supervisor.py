"""High-level controller.

The supervisor owns the mode state machine, maps the joystick, scales by
speed level, slew-limits the commanded twist, runs the command-source
watchdogs, integrates encoder odometry, and tracks battery and display
state. It runs at 50 Hz, half the drive rate, and talks to the drive unit
only through bus frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

from . import bus
from .bus import Frame
from .drive import DriveParams
from .kinematics import (
    Pose2D,
    RobotParams,
    Twist2D,
    integrate_odometry,
    ticks_to_distance,
    twist_to_wheel_rpm,
)


class Mode(Enum):
    BOOT = "Boot"
    MANUAL = "Manual"
    AUTOMATIC = "Automatic"
    ESTOPPED = "Estopped"
    DOCKED = "Docked"


SUPERVISOR_DT = 0.02          # 50 Hz control period
HEARTBEAT_DIVISOR = 5         # heartbeat every 5th tick -> 10 Hz
SOURCE_TIMEOUT = 0.3          # s of silence before a command source is stale
JOYSTICK_DEADZONE = 0.08      # radial, normalized axes

V_MAX = {1: 0.3, 2: 0.6, 3: 0.9}   # m/s by speed level
W_MAX = {1: 0.6, 2: 1.0, 3: 1.5}   # rad/s by speed level

BATTERY_FULL_V = 25.5
BATTERY_EMPTY_V = 22.0
BATTERY_CAPACITY_WH = 240.0
IDLE_DRAW_W = 5.0

ZERO_TWIST = Twist2D(0.0, 0.0)

EVENT_ESTOP_PRESSED = "estop_pressed"
EVENT_ESTOP_RESET = "estop_reset"
EVENT_SET_MODE = "set_mode"
EVENT_DOCK_REACHED = "dock_reached"
EVENT_UNDOCK = "undock"
EVENT_FUNCTION_KEY = "function_key"

EVENTS = (EVENT_ESTOP_PRESSED, EVENT_ESTOP_RESET, EVENT_SET_MODE,
          EVENT_DOCK_REACHED, EVENT_UNDOCK, EVENT_FUNCTION_KEY)


@dataclass(frozen=True, slots=True)
class SlewLimits:
    a_lin: float = 0.5    # m/s^2 while speeding up
    d_lin: float = 1.0    # m/s^2 while braking
    a_ang: float = 1.5    # rad/s^2
    d_ang: float = 3.0


@dataclass(frozen=True, slots=True)
class DisplayState:
    speed_level: int
    battery_v: float      # 0.1 V resolution
    mode_label: str


@dataclass
class SupervisorState:
    mode: Mode = Mode.BOOT
    speed_level: int = 1
    current_twist: Twist2D = ZERO_TWIST
    last_joystick_at: float = -math.inf
    last_auto_cmd_at: float = -math.inf
    battery_v: float = BATTERY_FULL_V
    estop_latched: bool = False
    pose: Pose2D = Pose2D()
    display: DisplayState = DisplayState(1, BATTERY_FULL_V, Mode.BOOT.value)
    invalid_events: int = 0
    send_failures: int = 0
    malformed_frames: int = 0


@dataclass(frozen=True, slots=True)
class TickInputs:
    """Everything the supervisor may consume at one tick boundary."""

    events: Sequence = ()                       # names or (name, arg) pairs
    joystick: Optional[tuple] = None            # (x, y) axes in [-1, 1]
    auto_cmd: Optional[Twist2D] = None
    frames: Sequence[Frame] = ()                # inbound drive traffic


def fsm_transition(mode: Mode, speed_level: int, event: str, arg=None):
    """Pure mode/speed transition. Returns (mode', speed_level', valid).

    E-stop dominates from every mode and exits only through an explicit
    reset, which always lands in Manual. Keys 1/2 step the speed level down
    and up with saturation; key 3 toggles Manual and Automatic. Everything
    else while Estopped, and any unknown event, is an ignored no-op.
    """
    if event == EVENT_ESTOP_PRESSED:
        return Mode.ESTOPPED, speed_level, True
    if event == EVENT_ESTOP_RESET:
        if mode is Mode.ESTOPPED:
            return Mode.MANUAL, speed_level, True
        return mode, speed_level, False
    if mode is Mode.ESTOPPED:
        return mode, speed_level, False
    if event == EVENT_SET_MODE:
        if mode is Mode.DOCKED:
            return mode, speed_level, False
        if arg == "manual":
            return Mode.MANUAL, speed_level, True
        if arg == "auto":
            return Mode.AUTOMATIC, speed_level, True
        return mode, speed_level, False
    if event == EVENT_DOCK_REACHED:
        if mode in (Mode.BOOT, Mode.MANUAL, Mode.AUTOMATIC):
            return Mode.DOCKED, speed_level, True
        return mode, speed_level, False
    if event == EVENT_UNDOCK:
        if mode is Mode.DOCKED:
            return Mode.MANUAL, speed_level, True
        return mode, speed_level, False
    if event == EVENT_FUNCTION_KEY:
        if arg == 1:
            return mode, max(1, speed_level - 1), True
        if arg == 2:
            return mode, min(3, speed_level + 1), True
        if arg == 3:
            if mode is Mode.MANUAL:
                return Mode.AUTOMATIC, speed_level, True
            if mode is Mode.AUTOMATIC:
                return Mode.MANUAL, speed_level, True
            return mode, speed_level, False
        return mode, speed_level, False
    return mode, speed_level, False


def joystick_to_twist(axes: tuple, speed_level: int) -> Twist2D:
    """Map clamped (x, y) axes to a twist; radial deadzone suppresses drift."""
    x = min(1.0, max(-1.0, axes[0]))
    y = min(1.0, max(-1.0, axes[1]))
    if math.hypot(x, y) < JOYSTICK_DEADZONE:
        return ZERO_TWIST
    return Twist2D(y * V_MAX[speed_level], -x * W_MAX[speed_level])


def _slew_axis(cur: float, des: float, accel: float, decel: float, dt: float) -> float:
    if des == cur:
        return cur
    if cur * des < 0.0:
        # sign change: brake to zero first, accelerate with the leftover budget
        t_zero = abs(cur) / decel
        if t_zero >= dt:
            return cur - math.copysign(decel * dt, cur)
        step = accel * (dt - t_zero)
        return math.copysign(min(abs(des), step), des)
    bound = (accel if abs(des) > abs(cur) else decel) * dt
    delta = des - cur
    if abs(delta) <= bound:
        return des
    return cur + math.copysign(bound, delta)


def slew_limit(current: Twist2D, desired: Twist2D, lim: SlewLimits, dt: float) -> Twist2D:
    """Move toward the desired twist, rate-bounded per axis."""
    return Twist2D(
        _slew_axis(current.v, desired.v, lim.a_lin, lim.d_lin, dt),
        _slew_axis(current.w, desired.w, lim.a_ang, lim.d_ang, dt),
    )


def arbitrate(s: SupervisorState, joystick: Optional[Twist2D],
              auto_cmd: Optional[Twist2D], now: float) -> Twist2D:
    """Pick the desired twist for the active mode, zeroing stale sources."""
    if s.mode is Mode.MANUAL:
        if joystick is None or now - s.last_joystick_at > SOURCE_TIMEOUT:
            return ZERO_TWIST
        return joystick
    if s.mode is Mode.AUTOMATIC:
        if auto_cmd is None or now - s.last_auto_cmd_at > SOURCE_TIMEOUT:
            return ZERO_TWIST
        return auto_cmd
    return ZERO_TWIST  # Boot, Estopped, Docked


def battery_update(battery_v: float, draw_w: float, dt: float) -> float:
    """Linear discharge: 25.5 V full to 22.0 V empty over 240 Wh."""
    span = BATTERY_FULL_V - BATTERY_EMPTY_V
    energy = (battery_v - BATTERY_EMPTY_V) / span * BATTERY_CAPACITY_WH
    energy = max(0.0, energy - draw_w * dt / 3600.0)
    return BATTERY_EMPTY_V + span * energy / BATTERY_CAPACITY_WH


def _clamp_s16(value: int) -> int:
    return max(-32768, min(32767, value))


class Supervisor:
    """Steps the high-level control loop; emits bus frames each tick."""

    def __init__(self, initial_mode: Mode = Mode.BOOT,
                 robot: RobotParams | None = None,
                 drive_params: DriveParams | None = None,
                 slew: SlewLimits | None = None):
        self.robot = robot or RobotParams()
        self.drive_params = drive_params or DriveParams()
        self.slew = slew or SlewLimits()
        self.state = SupervisorState(mode=initial_mode)
        self.state.estop_latched = initial_mode is Mode.ESTOPPED
        self.now = 0.0
        self.tick = 0
        self.hb_counter = 0
        self._last_joystick: Optional[tuple] = None
        self._last_auto: Optional[Twist2D] = None
        self._duty = (0.0, 0.0)
        self._estop_broadcast: Optional[int] = None
        self._refresh_display()

    def _refresh_display(self) -> None:
        s = self.state
        s.display = DisplayState(s.speed_level, round(s.battery_v, 1), s.mode.value)

    def apply_event(self, event: str, arg=None) -> bool:
        """Feed one event through the FSM; returns whether it was valid."""
        s = self.state
        mode, level, valid = fsm_transition(s.mode, s.speed_level, event, arg)
        if not valid:
            s.invalid_events += 1
            return False
        entering_estop = mode is Mode.ESTOPPED and not s.estop_latched
        leaving_estop = s.mode is Mode.ESTOPPED and mode is not Mode.ESTOPPED
        s.mode = mode
        s.speed_level = level
        if mode is Mode.ESTOPPED:
            s.estop_latched = True
            s.current_twist = ZERO_TWIST
            if entering_estop:
                self._estop_broadcast = 1
        elif leaving_estop:
            s.estop_latched = False
            self._estop_broadcast = 0
        return True

    def _consume_frames(self, frames: Iterable[Frame]) -> None:
        s = self.state
        p = self.drive_params
        for f in frames:
            try:
                msg = bus.unpack_message(f)
            except bus.BusError:
                s.malformed_frames += 1
                continue
            if isinstance(msg, bus.EncFeedback):
                dl = ticks_to_distance(msg.left_delta, p.ticks_per_rev,
                                       self.robot.wheel_radius)
                dr = ticks_to_distance(msg.right_delta, p.ticks_per_rev,
                                       self.robot.wheel_radius)
                s.pose = integrate_odometry(s.pose, dl, dr, self.robot)
            elif isinstance(msg, bus.MotorTelem):
                self._duty = (msg.duty_left, msg.duty_right)

    def step(self, inputs: TickInputs = TickInputs(),
             dt: float = SUPERVISOR_DT) -> list[Frame]:
        """One 50 Hz tick: events, frames, arbitration, slew, emission."""
        s = self.state
        self.now += dt
        for ev in inputs.events:
            name, arg = ev if isinstance(ev, tuple) else (ev, None)
            self.apply_event(name, arg)
        self._consume_frames(inputs.frames)

        if inputs.joystick is not None:
            self._last_joystick = inputs.joystick
            s.last_joystick_at = self.now
        if inputs.auto_cmd is not None:
            self._last_auto = inputs.auto_cmd
            s.last_auto_cmd_at = self.now

        joy_twist = (joystick_to_twist(self._last_joystick, s.speed_level)
                     if self._last_joystick is not None else None)
        desired = arbitrate(s, joy_twist, self._last_auto, self.now)
        if s.mode is Mode.ESTOPPED:
            s.current_twist = ZERO_TWIST  # hard zero, no ramp-down
        else:
            s.current_twist = slew_limit(s.current_twist, desired, self.slew, dt)

        draw = (self._duty[0] + self._duty[1]) / 100.0 * self.drive_params.motor_power_w \
            + IDLE_DRAW_W
        s.battery_v = battery_update(s.battery_v, draw, dt)
        self._refresh_display()

        out: list[Frame] = []
        if self._estop_broadcast is not None:
            out.append(bus.pack_message(bus.Estop(self._estop_broadcast)))
            self._estop_broadcast = None
        left_rpm, right_rpm = twist_to_wheel_rpm(s.current_twist, self.robot)
        flags = bus.VEL_FLAG_BRAKE if s.mode is Mode.ESTOPPED else 0
        try:
            out.append(bus.pack_message(bus.VelCmd(
                _clamp_s16(int(round(left_rpm * 10.0))),
                _clamp_s16(int(round(right_rpm * 10.0))), flags)))
        except bus.BusError:
            s.send_failures += 1
        if (self.tick + 1) % HEARTBEAT_DIVISOR == 0:
            out.append(bus.pack_message(bus.Heartbeat(
                bus.HEARTBEAT_SOURCE_SUPERVISOR, self.hb_counter)))
            self.hb_counter = (self.hb_counter + 1) & 0xFF
        self.tick += 1
        return out
