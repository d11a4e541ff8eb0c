"""Differential-drive conversions and exact-arc encoder odometry."""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, slots=True)
class Twist2D:
    """Body-frame velocity: v forward (m/s), w counter-clockwise (rad/s)."""

    v: float = 0.0
    w: float = 0.0


@dataclass(frozen=True, slots=True)
class Pose2D:
    """Planar pose; theta is kept in (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0


@dataclass(frozen=True, slots=True)
class RobotParams:
    wheel_radius: float = 0.075     # m
    track_width: float = 0.45       # m between wheel contact points
    footprint_radius: float = 0.35  # m collision disc
    mass_kg: float = 27.8
    payload_kg: float = 100.0
    casters: int = 4                # informational only


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


def twist_to_wheel_rpm(t: Twist2D, p: RobotParams) -> tuple[float, float]:
    """Split a body twist into (left_rpm, right_rpm)."""
    half = 0.5 * p.track_width
    k = 60.0 / (TWO_PI * p.wheel_radius)
    return (t.v - t.w * half) * k, (t.v + t.w * half) * k


def wheel_rpm_to_twist(left_rpm: float, right_rpm: float, p: RobotParams) -> Twist2D:
    """Exact inverse of twist_to_wheel_rpm."""
    k = TWO_PI * p.wheel_radius / 60.0
    v_l = left_rpm * k
    v_r = right_rpm * k
    return Twist2D(0.5 * (v_l + v_r), (v_r - v_l) / p.track_width)


def integrate_odometry(pose: Pose2D, d_left: float, d_right: float,
                       p: RobotParams) -> Pose2D:
    """Advance a pose by per-wheel arc lengths using the exact arc model.

    Straight-line update below |dtheta| = 1e-9 avoids the 0/0 turning
    radius; otherwise the chord of the circular arc is applied.
    """
    dtheta = (d_right - d_left) / p.track_width
    dc = 0.5 * (d_left + d_right)
    if abs(dtheta) < 1e-9:
        x = pose.x + dc * math.cos(pose.theta)
        y = pose.y + dc * math.sin(pose.theta)
    else:
        r = dc / dtheta
        x = pose.x + r * (math.sin(pose.theta + dtheta) - math.sin(pose.theta))
        y = pose.y - r * (math.cos(pose.theta + dtheta) - math.cos(pose.theta))
    return Pose2D(x, y, normalize_angle(pose.theta + dtheta))


def ticks_to_distance(delta_ticks: int, ticks_per_rev: int, wheel_radius: float) -> float:
    """Encoder tick delta to wheel travel in metres."""
    return delta_ticks / ticks_per_rev * TWO_PI * wheel_radius
