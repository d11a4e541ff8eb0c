"""Simulated drive-unit firmware.

One DriveUnit owns the two motor states and is stepped at a fixed control
period. Each step consumes the frames that arrived since the previous step
and emits encoder feedback every tick plus telemetry and a heartbeat at a
tenth of the control rate. Protective behavior lives here: thermal derating
and fault latching, the velocity-command brake flag, the E-stop latch, and
a fail-safe brake when supervisor heartbeats go quiet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

from . import bus
from .bus import Estop, Frame, Heartbeat, MotorTelem, VelCmd

FAULT_NONE = "none"
FAULT_OVERTEMP = "overtemp"
FAULT_OVERCURRENT = "overcurrent"


@dataclass
class MotorState:
    rpm: float = 0.0
    target_rpm: float = 0.0
    temp_c: float = 25.0
    duty: float = 0.0
    fault: str = FAULT_NONE
    brake_engaged: bool = False


@dataclass(frozen=True)
class DriveParams:
    motor_power_w: float = 86.0      # per motor, informational
    max_rpm: float = 250.0
    tau_motor: float = 0.15          # s, first-order response constant
    ticks_per_rev: int = 4096
    t_amb: float = 25.0              # deg C
    t_derate: float = 70.0
    t_fault: float = 80.0
    k_heat: float = 0.004            # deg C/s per duty^2 unit
    k_cool: float = 0.05             # 1/s
    heartbeat_timeout: float = 0.1   # s of supervisor silence before fail-safe


class BackdriveRejectedError(Exception):
    """Back-driving was resisted because a brake is engaged."""


def derate_factor(temp_c: float, p: DriveParams) -> float:
    """Command scale in [0,1]; tapers linearly from t_derate to zero at t_fault."""
    if temp_c <= p.t_derate:
        return 1.0
    return max(0.0, (p.t_fault - temp_c) / (p.t_fault - p.t_derate))


def motor_dynamics(state: MotorState, p: DriveParams, dt: float) -> MotorState:
    """First-order plant step toward the effective target.

    A fault or an engaged brake pulls toward zero with tau/4: the
    rheostatic brake dumps momentum much faster than coasting. Thermal
    derating scales the applied target; the stored command is untouched so
    load reporting stays honest to what was asked.
    """
    if state.fault != FAULT_NONE or state.brake_engaged:
        target = 0.0
        tau = p.tau_motor / 4.0
    else:
        target = state.target_rpm * derate_factor(state.temp_c, p)
        tau = p.tau_motor
    alpha = 1.0 - math.exp(-dt / tau)
    return replace(state, rpm=state.rpm + (target - state.rpm) * alpha)


def compute_load_duty(state: MotorState, p: DriveParams) -> float:
    """Load factor: tracking-error effort plus 20% speed-proportional friction."""
    raw = (100.0 * abs(state.target_rpm - state.rpm) / p.max_rpm
           + 100.0 * abs(state.rpm) / p.max_rpm * 0.2)
    return min(100.0, max(0.0, raw))


def thermal_update(temp_c: float, duty: float, p: DriveParams, dt: float) -> float:
    """One explicit-Euler step of the winding heat balance."""
    return temp_c + dt * (p.k_heat * duty * duty - p.k_cool * (temp_c - p.t_amb))


class DriveUnit:
    """Firmware loop for the motor pair; step() once per control period."""

    def __init__(self, params: DriveParams | None = None):
        self.params = params or DriveParams()
        self.left = MotorState(temp_c=self.params.t_amb)
        self.right = MotorState(temp_c=self.params.t_amb)
        self.tick = 0
        self.enc_seq = 0
        self.hb_counter = 0
        self.malformed_count = 0
        self.estop_latched = False
        self.failsafe_braked = False
        self._frac_left = 0.0
        self._frac_right = 0.0
        self._hb_age = 0.0

    def _engage_brake(self) -> None:
        for m in (self.left, self.right):
            m.brake_engaged = True
            m.target_rpm = 0.0

    def _release_brake(self) -> None:
        for m in (self.left, self.right):
            m.brake_engaged = False

    def _apply_frame(self, frame: Frame) -> None:
        try:
            msg = bus.unpack_message(frame)
        except bus.BusError:
            self.malformed_count += 1
            return
        if isinstance(msg, Estop):
            if msg.asserted:
                self.estop_latched = True
                self._engage_brake()
            else:
                self.estop_latched = False
                if not self.failsafe_braked:
                    self._release_brake()
        elif isinstance(msg, VelCmd):
            if self.estop_latched or self.failsafe_braked:
                return
            if msg.flags & bus.VEL_FLAG_BRAKE:
                self._engage_brake()
            else:
                self._release_brake()
                if self.left.fault == FAULT_NONE:
                    self.left.target_rpm = msg.left_rpm_d / 10.0
                if self.right.fault == FAULT_NONE:
                    self.right.target_rpm = msg.right_rpm_d / 10.0
        elif isinstance(msg, Heartbeat):
            if msg.source == bus.HEARTBEAT_SOURCE_SUPERVISOR:
                self._hb_age = 0.0
                if self.failsafe_braked:
                    self.failsafe_braked = False
                    if not self.estop_latched:
                        self._release_brake()
        # other traffic (our own telemetry, encoder echoes) is not for us

    def _update_motor(self, state: MotorState, dt: float) -> MotorState:
        p = self.params
        state = motor_dynamics(state, p, dt)
        state.duty = compute_load_duty(state, p)
        state.temp_c = thermal_update(state.temp_c, state.duty, p, dt)
        if state.temp_c >= p.t_fault and state.fault == FAULT_NONE:
            state.fault = FAULT_OVERTEMP
            state.target_rpm = 0.0
        return state

    def reset_faults(self) -> None:
        """Explicit maintenance reset; the only way a latched fault clears."""
        for m in (self.left, self.right):
            m.fault = FAULT_NONE

    def backdrive(self, external_rpm_rate: float, dt: float) -> None:
        """Integrate an externally imposed shaft rate (robot being pushed)."""
        if self.left.brake_engaged or self.right.brake_engaged:
            raise BackdriveRejectedError("brake engaged resists back-driving")
        self.left.rpm += external_rpm_rate * dt
        self.right.rpm += external_rpm_rate * dt

    def step(self, inbox: Iterable[Frame], dt: float) -> list[Frame]:
        """Advance one control period; returns frames emitted this tick."""
        p = self.params
        for frame in inbox:
            self._apply_frame(frame)
        self._hb_age += dt
        if self._hb_age > p.heartbeat_timeout and not self.failsafe_braked:
            self.failsafe_braked = True
            self._engage_brake()

        self.left = self._update_motor(self.left, dt)
        self.right = self._update_motor(self.right, dt)

        out: list[Frame] = []
        tick_rev = dt / 60.0 * p.ticks_per_rev
        self._frac_left += self.left.rpm * tick_rev
        self._frac_right += self.right.rpm * tick_rev
        dl = int(self._frac_left)
        dr = int(self._frac_right)
        self._frac_left -= dl
        self._frac_right -= dr
        out.append(bus.pack_message(bus.EncFeedback(dl, dr, self.enc_seq)))
        self.enc_seq = (self.enc_seq + 1) & 0xFF

        if (self.tick + 1) % 10 == 0:
            flags = 0
            if self.left.fault == FAULT_OVERTEMP:
                flags |= bus.FAULT_OVERTEMP_LEFT
            if self.right.fault == FAULT_OVERTEMP:
                flags |= bus.FAULT_OVERTEMP_RIGHT
            if FAULT_OVERCURRENT in (self.left.fault, self.right.fault):
                flags |= bus.FAULT_OVERCURRENT
            out.append(bus.pack_message(MotorTelem(
                _clamp_temp(self.left.temp_c), _clamp_temp(self.right.temp_c),
                int(round(self.left.duty)), int(round(self.right.duty)), flags)))
            out.append(bus.pack_message(Heartbeat(
                bus.HEARTBEAT_SOURCE_DRIVE, self.hb_counter)))
            self.hb_counter = (self.hb_counter + 1) & 0xFF

        self.tick += 1
        return out


def _clamp_temp(temp_c: float) -> int:
    return max(-128, min(127, int(round(temp_c))))
