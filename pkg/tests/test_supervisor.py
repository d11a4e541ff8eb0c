import math
import random

from standbot import bus
from standbot.bus import EncFeedback, Estop, Heartbeat, MotorTelem, VelCmd
from standbot.kinematics import Twist2D
from standbot.supervisor import (
    BATTERY_CAPACITY_WH,
    BATTERY_FULL_V,
    Mode,
    SlewLimits,
    Supervisor,
    SupervisorState,
    TickInputs,
    arbitrate,
    battery_update,
    fsm_transition,
    joystick_to_twist,
    slew_limit,
)

DT = 0.02
LIM = SlewLimits()


def unpacked(frames):
    return [bus.unpack_message(f) for f in frames]


# -- FSM ----------------------------------------------------------------------

def test_estop_from_any_mode():
    for mode in Mode:
        new_mode, _, valid = fsm_transition(mode, 2, "estop_pressed")
        assert new_mode is Mode.ESTOPPED and valid


def test_estop_reset_only_exit_to_manual():
    assert fsm_transition(Mode.ESTOPPED, 1, "estop_reset") == (Mode.MANUAL, 1, True)
    for event, arg in [("set_mode", "auto"), ("set_mode", "manual"),
                       ("dock_reached", None), ("undock", None),
                       ("function_key", 3)]:
        mode, _, valid = fsm_transition(Mode.ESTOPPED, 1, event, arg)
        assert mode is Mode.ESTOPPED and not valid


def test_speed_keys_saturate():
    assert fsm_transition(Mode.MANUAL, 2, "function_key", 2)[1] == 3
    assert fsm_transition(Mode.MANUAL, 3, "function_key", 2)[1] == 3
    assert fsm_transition(Mode.MANUAL, 1, "function_key", 1)[1] == 1


def test_key3_toggles_manual_auto():
    assert fsm_transition(Mode.MANUAL, 1, "function_key", 3)[0] is Mode.AUTOMATIC
    assert fsm_transition(Mode.AUTOMATIC, 1, "function_key", 3)[0] is Mode.MANUAL
    assert fsm_transition(Mode.DOCKED, 1, "function_key", 3)[:2] == (Mode.DOCKED, 1)


def test_dock_undock():
    assert fsm_transition(Mode.AUTOMATIC, 1, "dock_reached")[0] is Mode.DOCKED
    assert fsm_transition(Mode.DOCKED, 1, "undock")[0] is Mode.MANUAL
    assert fsm_transition(Mode.DOCKED, 1, "set_mode", "auto")[2] is False


def test_invalid_events_counted():
    sup = Supervisor(initial_mode=Mode.MANUAL)
    assert not sup.apply_event("undock")
    assert not sup.apply_event("no_such_event")
    assert sup.state.invalid_events == 2
    assert sup.state.mode is Mode.MANUAL


def test_estop_event_zeroes_twist():
    sup = Supervisor(initial_mode=Mode.AUTOMATIC)
    sup.state.current_twist = Twist2D(0.9, 0.3)
    sup.apply_event("estop_pressed")
    assert sup.state.mode is Mode.ESTOPPED
    assert sup.state.current_twist == Twist2D(0.0, 0.0)
    assert sup.state.estop_latched


# -- joystick mapping ---------------------------------------------------------

def test_joystick_center_is_zero():
    assert joystick_to_twist((0.0, 0.0), 1) == Twist2D(0.0, 0.0)


def test_joystick_full_forward_level2():
    t = joystick_to_twist((0.0, 1.0), 2)
    assert abs(t.v - 0.6) < 1e-12 and t.w == 0.0


def test_joystick_deadzone():
    assert joystick_to_twist((0.05, 0.05), 3) == Twist2D(0.0, 0.0)
    assert joystick_to_twist((0.1, 0.0), 3) != Twist2D(0.0, 0.0)


def test_joystick_turn_sign():
    # pushing right (+x) turns clockwise (negative w)
    t = joystick_to_twist((1.0, 0.0), 3)
    assert t.w == -1.5 and t.v == 0.0


def test_joystick_clamps_box():
    t = joystick_to_twist((0.0, 2.5), 1)
    assert abs(t.v - 0.3) < 1e-12


# -- slew limiter -------------------------------------------------------------

def test_slew_accel_bound():
    out = slew_limit(Twist2D(0.0, 0.0), Twist2D(0.9, 0.0), LIM, 0.1)
    assert abs(out.v - 0.05) < 1e-12


def test_slew_decel_bound():
    out = slew_limit(Twist2D(0.9, 0.0), Twist2D(0.0, 0.0), LIM, 0.1)
    assert abs(out.v - 0.8) < 1e-12


def test_slew_fixed_point():
    t = Twist2D(0.4, -0.7)
    assert slew_limit(t, t, LIM, 0.1) == t


def test_slew_zero_crossing_budget():
    # 0.05 s of braking empties 0.05 m/s, leaving 0.15 s of acceleration
    out = slew_limit(Twist2D(0.05, 0.0), Twist2D(-0.9, 0.0), LIM, 0.2)
    assert abs(out.v - (-0.075)) < 1e-12


def test_slew_reaches_target_exactly():
    out = slew_limit(Twist2D(0.29, 0.0), Twist2D(0.3, 0.0), LIM, 0.1)
    assert out.v == 0.3


def test_slew_obedience_fuzz():
    rng = random.Random(11)
    cur = Twist2D(0.0, 0.0)
    vmax_step = max(LIM.a_lin, LIM.d_lin) * DT + 1e-12
    wmax_step = max(LIM.a_ang, LIM.d_ang) * DT + 1e-12
    for _ in range(5000):
        des = Twist2D(rng.uniform(-0.9, 0.9), rng.uniform(-1.5, 1.5))
        new = slew_limit(cur, des, LIM, DT)
        assert abs(new.v - cur.v) <= vmax_step
        assert abs(new.w - cur.w) <= wmax_step
        cur = new


# -- arbitration --------------------------------------------------------------

def test_arbitrate_stale_auto_zeroed():
    s = SupervisorState(mode=Mode.AUTOMATIC, last_auto_cmd_at=0.0)
    assert arbitrate(s, None, Twist2D(0.5, 0.0), 0.5) == Twist2D(0.0, 0.0)
    assert arbitrate(s, None, Twist2D(0.5, 0.0), 0.2) == Twist2D(0.5, 0.0)


def test_arbitrate_manual_uses_joystick():
    s = SupervisorState(mode=Mode.MANUAL, last_joystick_at=1.0)
    mapped = joystick_to_twist((0.0, 1.0), 1)
    assert arbitrate(s, mapped, None, 1.1) == Twist2D(0.3, 0.0)


def test_arbitrate_estopped_always_zero():
    s = SupervisorState(mode=Mode.ESTOPPED, last_joystick_at=1.0,
                        last_auto_cmd_at=1.0)
    out = arbitrate(s, Twist2D(0.9, 0.0), Twist2D(0.5, 0.5), 1.0)
    assert out == Twist2D(0.0, 0.0)


# -- battery ------------------------------------------------------------------

def test_battery_idle_hour():
    v = BATTERY_FULL_V
    for _ in range(3600):
        v = battery_update(v, 5.0, 1.0)
    assert abs((BATTERY_FULL_V - v) - 3.5 * 5.0 / BATTERY_CAPACITY_WH) < 1e-9
    assert abs((BATTERY_FULL_V - v) - 0.073) < 1e-3


def test_battery_zero_time():
    assert battery_update(24.0, 177.0, 0.0) == 24.0


def test_battery_full_load_draw():
    # both motors at duty 100 -> 2*86 + 5 = 177 W
    sup = Supervisor(initial_mode=Mode.MANUAL)
    telem = bus.pack_message(MotorTelem(40, 40, 100, 100, 0))
    sup.step(TickInputs(frames=[telem]), DT)
    v_before = sup.state.battery_v
    sup.step(TickInputs(), DT)
    expect = battery_update(v_before, 177.0, DT)
    assert abs(sup.state.battery_v - expect) < 1e-12


def test_battery_monotone():
    rng = random.Random(2)
    sup = Supervisor(initial_mode=Mode.MANUAL)
    last = sup.state.battery_v
    for _ in range(500):
        sup.step(TickInputs(joystick=(rng.uniform(-1, 1), rng.uniform(-1, 1))), DT)
        assert sup.state.battery_v <= last
        last = sup.state.battery_v


# -- full tick ----------------------------------------------------------------

def test_manual_ramp_to_level1_cruise():
    sup = Supervisor(initial_mode=Mode.MANUAL)
    for _ in range(50):  # 1 s
        sup.step(TickInputs(joystick=(0.0, 1.0)), DT)
    assert abs(sup.state.current_twist.v - 0.3) < 1e-9
    # ramp at 0.5 m/s^2 hits 0.3 m/s at t = 0.6 s
    sup2 = Supervisor(initial_mode=Mode.MANUAL)
    for _ in range(10):
        sup2.step(TickInputs(joystick=(0.0, 1.0)), DT)
    assert abs(sup2.state.current_twist.v - 0.1) < 1e-9


def test_tick_frame_accounting():
    sup = Supervisor(initial_mode=Mode.MANUAL)
    msgs = []
    for _ in range(50):
        msgs.extend(unpacked(sup.step(TickInputs(joystick=(0.0, 1.0)), DT)))
    assert sum(isinstance(m, VelCmd) for m in msgs) == 50
    assert sum(isinstance(m, Heartbeat) for m in msgs) == 10


def test_estop_commands_zero_next_frame():
    sup = Supervisor(initial_mode=Mode.MANUAL)
    for _ in range(50):
        sup.step(TickInputs(joystick=(0.0, 1.0)), DT)
    out = unpacked(sup.step(TickInputs(events=["estop_pressed"]), DT))
    estops = [m for m in out if isinstance(m, Estop)]
    cmds = [m for m in out if isinstance(m, VelCmd)]
    assert estops and estops[0].asserted == 1
    assert cmds[0].left_rpm_d == 0 and cmds[0].right_rpm_d == 0
    assert cmds[0].flags & bus.VEL_FLAG_BRAKE


def test_estop_reset_broadcasts_clear():
    sup = Supervisor(initial_mode=Mode.MANUAL)
    sup.step(TickInputs(events=["estop_pressed"]), DT)
    out = unpacked(sup.step(TickInputs(events=["estop_reset"]), DT))
    estops = [m for m in out if isinstance(m, Estop)]
    assert estops and estops[0].asserted == 0
    assert sup.state.mode is Mode.MANUAL


def test_watchdog_zeroes_desired_after_silence():
    sup = Supervisor(initial_mode=Mode.MANUAL)
    for _ in range(50):
        sup.step(TickInputs(joystick=(0.0, 1.0)), DT)
    assert sup.state.current_twist.v > 0.29
    # silence: after 0.3 s the desired twist drops to zero and the
    # commanded twist ramps down at the braking rate
    values = []
    for _ in range(40):
        sup.step(TickInputs(), DT)
        values.append(sup.state.current_twist.v)
    first_drop = next(i for i, v in enumerate(values) if v < 0.299)
    assert 14 <= first_drop <= 16     # stale within one tick of the 0.3 s mark
    assert values[first_drop - 1] - values[first_drop] <= LIM.d_lin * DT + 1e-12
    assert values[-1] == 0.0


def test_auto_mode_follows_auto_cmd():
    sup = Supervisor(initial_mode=Mode.MANUAL)
    sup.apply_event("set_mode", "auto")
    for _ in range(100):
        sup.step(TickInputs(auto_cmd=Twist2D(0.5, 0.0)), DT)
    assert abs(sup.state.current_twist.v - 0.5) < 1e-9
    # joystick input is ignored in Automatic
    sup.step(TickInputs(joystick=(0.0, -1.0), auto_cmd=Twist2D(0.5, 0.0)), DT)
    assert sup.state.current_twist.v > 0.49


def test_display_consistency():
    rng = random.Random(8)
    sup = Supervisor(initial_mode=Mode.MANUAL)
    for i in range(200):
        events = []
        if rng.random() < 0.1:
            events.append(("function_key", rng.randint(1, 3)))
        if rng.random() < 0.02:
            events.append("estop_pressed")
        if rng.random() < 0.02:
            events.append("estop_reset")
        sup.step(TickInputs(events=events, joystick=(rng.uniform(-1, 1),
                                                     rng.uniform(-1, 1))), DT)
        d = sup.state.display
        assert d.speed_level == sup.state.speed_level
        assert d.battery_v == round(sup.state.battery_v, 1)
        assert d.mode_label == sup.state.mode.value


def test_odometry_from_encoder_frames():
    sup = Supervisor(initial_mode=Mode.MANUAL)
    # 4096 ticks each wheel = one revolution = 0.4712 m straight
    sup.step(TickInputs(frames=[bus.pack_message(EncFeedback(4096, 4096, 0))]), DT)
    assert abs(sup.state.pose.x - 2 * math.pi * 0.075) < 1e-9
    assert sup.state.pose.y == 0.0


def test_speed_level_change_rescales_joystick():
    sup = Supervisor(initial_mode=Mode.MANUAL)
    for _ in range(200):
        sup.step(TickInputs(joystick=(0.0, 1.0)), DT)
    assert abs(sup.state.current_twist.v - 0.3) < 1e-9
    sup.apply_event("function_key", 2)
    for _ in range(200):
        sup.step(TickInputs(joystick=(0.0, 1.0)), DT)
    assert abs(sup.state.current_twist.v - 0.6) < 1e-9
