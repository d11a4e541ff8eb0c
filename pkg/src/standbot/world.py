"""Deterministic 2D environment.

An occupancy grid loaded from ASCII art, a kinematic robot plant stepped at
100 Hz, disc-footprint collision rejection, and a simulated 2D laser
scanner. World +y is up: the first text line of a map is its top edge, and
grid row 0 sits at y = 0. Cell (row, col) spans
[col*res, (col+1)*res] x [row*res, (row+1)*res].

Map legend: '#' occupied, '.' free, and free marker cells 'D' (dock),
'B' (bedside), 'T' (toilet) whose centers become named poses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kinematics import Pose2D, RobotParams, integrate_odometry

DEFAULT_RESOLUTION = 0.05  # m/cell

MARKER_LABELS = {"D": "DOCK", "B": "BED", "T": "TOILET"}


class MapParseError(Exception):
    """Map text is not a valid rectangular legend block."""


class SensorOriginError(Exception):
    """Laser origin lies inside an occupied cell."""


@dataclass
class OccupancyGrid:
    resolution: float
    occupied: np.ndarray                  # bool [rows, cols], row 0 at y = 0
    named_poses: dict = field(default_factory=dict)
    # original obstacles when this grid is an inflated copy; inflation
    # always re-derives from these, keeping it idempotent
    hard_occupied: Optional[np.ndarray] = None

    @property
    def height(self) -> int:
        return self.occupied.shape[0]

    @property
    def width(self) -> int:
        return self.occupied.shape[1]

    def cell_of(self, x: float, y: float) -> tuple:
        return int(math.floor(y / self.resolution)), int(math.floor(x / self.resolution))

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    def is_occupied_world(self, x: float, y: float) -> bool:
        """Occupancy at a world point; space beyond the grid is free."""
        row, col = self.cell_of(x, y)
        return self.in_bounds(row, col) and bool(self.occupied[row, col])

    def cell_center(self, row: int, col: int) -> tuple:
        return (col + 0.5) * self.resolution, (row + 0.5) * self.resolution


def load_map(text: str, resolution: float = DEFAULT_RESOLUTION,
             required_markers: tuple = ()) -> OccupancyGrid:
    """Parse an ASCII map block into an OccupancyGrid.

    Errors carry 1-based line/column positions. Marker labels may appear at
    most once; required_markers lists labels that must be present.
    """
    lines = text.splitlines()
    if not lines or not lines[0]:
        raise MapParseError("empty map text")
    width = len(lines[0])
    rows = len(lines)
    occupied = np.zeros((rows, width), dtype=bool)
    named = {}
    for i, line in enumerate(lines):
        if len(line) != width:
            raise MapParseError(
                f"ragged map: line {i + 1} has {len(line)} columns, expected {width}")
        row = rows - 1 - i  # first text line is the top edge
        for j, ch in enumerate(line):
            if ch == "#":
                occupied[row, j] = True
            elif ch == ".":
                pass
            elif ch in MARKER_LABELS:
                label = MARKER_LABELS[ch]
                if label in named:
                    raise MapParseError(
                        f"duplicate marker '{ch}' at line {i + 1} col {j + 1}")
                named[label] = Pose2D((j + 0.5) * resolution,
                                      (row + 0.5) * resolution, 0.0)
            else:
                raise MapParseError(
                    f"unknown map character {ch!r} at line {i + 1} col {j + 1}")
    for label in required_markers:
        if label not in named:
            raise MapParseError(f"missing required marker {label}")
    return OccupancyGrid(resolution, occupied, named)


@dataclass(frozen=True, slots=True)
class LidarConfig:
    angle_min: float = -0.75 * math.pi   # rad, relative to heading
    angle_max: float = 0.75 * math.pi
    beams: int = 360
    range_max: float = 30.0              # m
    noise_sigma: float = 0.01            # m, 0 disables noise

    @property
    def no_return(self) -> float:
        return self.range_max + 1.0

    @property
    def increment(self) -> float:
        return (self.angle_max - self.angle_min) / self.beams


@dataclass
class LaserScan:
    angle_min: float
    angle_max: float
    beams: int
    range_max: float
    ranges: np.ndarray
    stamp: float = 0.0


def lidar_scan(grid: OccupancyGrid, pose: Pose2D,
               cfg: LidarConfig = LidarConfig(),
               rng: Optional[np.random.Generator] = None) -> LaserScan:
    """Cast all beams by incremental grid traversal.

    Every ray walks cell boundaries exactly (no sampling); the reported
    range is the distance to the first occupied cell's boundary. All beams
    advance together as numpy vectors, with finished rays dropped from the
    working set. Gaussian noise is added only when a generator is supplied
    and noise_sigma > 0; no-returns stay at the sentinel range_max + 1.
    """
    res = grid.resolution
    occ = grid.occupied
    n = cfg.beams
    start_row, start_col = grid.cell_of(pose.x, pose.y)
    if grid.in_bounds(start_row, start_col) and occ[start_row, start_col]:
        raise SensorOriginError(
            f"laser origin ({pose.x:.3f}, {pose.y:.3f}) is inside an occupied cell")

    angles = pose.theta + cfg.angle_min + cfg.increment * np.arange(n)
    dx = np.cos(angles)
    dy = np.sin(angles)
    step_col = np.where(dx > 0, 1, -1)
    step_row = np.where(dy > 0, 1, -1)
    col = np.full(n, start_col, dtype=np.int64)
    row = np.full(n, start_row, dtype=np.int64)
    # distance along the ray to the next vertical / horizontal cell edge;
    # axis-parallel rays get inf on the degenerate axis
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_dx = np.where(dx != 0.0, 1.0 / dx, np.inf)
        inv_dy = np.where(dy != 0.0, 1.0 / dy, np.inf)
        tmax_x = np.where(dx != 0.0,
                          ((col + (step_col > 0)) * res - pose.x) * inv_dx, np.inf)
        tmax_y = np.where(dy != 0.0,
                          ((row + (step_row > 0)) * res - pose.y) * inv_dy, np.inf)
    tdelta_x = np.abs(res * inv_dx)
    tdelta_y = np.abs(res * inv_dy)

    ranges = np.full(n, cfg.no_return)
    idx = np.arange(n)
    while idx.size:
        use_x = tmax_x < tmax_y
        t = np.where(use_x, tmax_x, tmax_y)
        col = np.where(use_x, col + step_col, col)
        row = np.where(use_x, row, row + step_row)
        tmax_x = np.where(use_x, tmax_x + tdelta_x, tmax_x)
        tmax_y = np.where(use_x, tmax_y, tmax_y + tdelta_y)

        out = (t > cfg.range_max) | (col < 0) | (col >= grid.width) \
            | (row < 0) | (row >= grid.height)
        inside = ~out
        hit = np.zeros_like(out)
        hit[inside] = occ[row[inside], col[inside]]
        ranges[idx[hit]] = t[hit]
        keep = ~(out | hit)
        if not keep.all():
            idx = idx[keep]
            col, row = col[keep], row[keep]
            tmax_x, tmax_y = tmax_x[keep], tmax_y[keep]
            tdelta_x, tdelta_y = tdelta_x[keep], tdelta_y[keep]
            step_col, step_row = step_col[keep], step_row[keep]

    if rng is not None and cfg.noise_sigma > 0.0:
        returned = ranges <= cfg.range_max
        noise = rng.normal(0.0, cfg.noise_sigma, n)
        ranges = np.where(returned,
                          np.clip(ranges + noise, 1e-9, cfg.range_max), ranges)
    return LaserScan(cfg.angle_min, cfg.angle_max, n, cfg.range_max, ranges)


class World:
    """Robot plant on a grid: pose physics, collisions, laser, sim clock."""

    def __init__(self, grid: OccupancyGrid, pose: Pose2D,
                 robot: RobotParams | None = None, seed: int = 0,
                 lidar_cfg: LidarConfig | None = None):
        self.grid = grid
        self.pose = pose
        self.robot = robot or RobotParams()
        self.seed = seed
        self.lidar_cfg = lidar_cfg or LidarConfig()
        self.rng = np.random.default_rng(seed)
        self.time = 0.0
        self.left_rpm = 0.0
        self.right_rpm = 0.0
        self.collision_count = 0
        self._wheel_k = 2.0 * math.pi * self.robot.wheel_radius / 60.0

    def footprint_collides(self, x: float, y: float) -> bool:
        """Does the robot disc at (x, y) overlap any occupied cell?"""
        r = self.robot.footprint_radius
        res = self.grid.resolution
        occ = self.grid.occupied
        row0 = max(0, int(math.floor((y - r) / res)))
        row1 = min(self.grid.height - 1, int(math.floor((y + r) / res)))
        col0 = max(0, int(math.floor((x - r) / res)))
        col1 = min(self.grid.width - 1, int(math.floor((x + r) / res)))
        if row0 > row1 or col0 > col1:
            return False
        sub = occ[row0:row1 + 1, col0:col1 + 1]
        if not sub.any():
            return False
        rows, cols = np.nonzero(sub)
        rows = rows + row0
        cols = cols + col0
        # closest point of each occupied cell rectangle to the disc center
        px = np.clip(x, cols * res, (cols + 1) * res)
        py = np.clip(y, rows * res, (rows + 1) * res)
        return bool((((px - x) ** 2 + (py - y) ** 2) <= r * r).any())

    def step(self, left_rpm: float, right_rpm: float, dt: float) -> None:
        """Advance one 100 Hz physics tick; collisions reject the move."""
        d_left = left_rpm * self._wheel_k * dt
        d_right = right_rpm * self._wheel_k * dt
        new_pose = integrate_odometry(self.pose, d_left, d_right, self.robot)
        if (new_pose.x != self.pose.x or new_pose.y != self.pose.y) \
                and self.footprint_collides(new_pose.x, new_pose.y):
            self.collision_count += 1
        else:
            self.pose = new_pose
        self.left_rpm = left_rpm
        self.right_rpm = right_rpm
        self.time += dt

    def scan(self) -> LaserScan:
        """Laser scan from the current pose using the world's seeded noise."""
        rng = self.rng if self.lidar_cfg.noise_sigma > 0.0 else None
        s = lidar_scan(self.grid, self.pose, self.lidar_cfg, rng)
        s.stamp = self.time
        return s
