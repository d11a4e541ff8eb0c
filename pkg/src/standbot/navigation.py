"""Automatic-mode autonomy.

Global planning is A* over the obstacle-inflated grid with exact integer
cost accounting (straight steps and diagonal steps are counted separately,
so path costs compare exactly against an optimal-search oracle). The local
follower is pure pursuit with a scan-based forward safety gate. A
Navigator instance tracks one goal at a time and is updated at the laser
cadence; it only produces twist commands, never touching world state.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .kinematics import Pose2D, Twist2D, normalize_angle
from .world import LaserScan, OccupancyGrid

SQRT2 = math.sqrt(2.0)

# Follower caps and shaping, independent of the planner config
MAX_TURN_RATE = 2.0          # rad/s, hard cap on emitted |w|
ALIGN_TURN_RATE = 1.2        # rad/s, rotate-in-place speed toward goal yaw
ALIGN_MIN_RATE = 0.15        # rad/s, floor so alignment always finishes
ROTATE_FIRST_BEARING = 1.75  # rad; beyond this, turn in place toward the target
APPROACH_GAIN = 1.0          # 1/s, taper v to approach_gain * goal distance
APPROACH_MIN_V = 0.08        # m/s, floor of the approach taper
SHORTCUT_EXTRA_CLEARANCE = 0.25  # m beyond inflation for line-of-sight cuts
LOOKAHEAD_MIN = 0.25         # m, tight-tracking floor for slow sharp turns
LOOKAHEAD_TIME = 1.2         # s; carrot distance scales with commanded speed


class NoPathError(Exception):
    """Goal is unreachable on the inflated grid."""


class InvalidEndpointError(Exception):
    """Start or goal lies in inflated-occupied space."""


@dataclass(frozen=True, slots=True)
class NavConfig:
    inflation_radius: float = 0.40   # m, footprint 0.35 + 0.05 margin
    lookahead: float = 0.5           # m along the path
    goal_pos_tol: float = 0.05       # m
    goal_yaw_tol: float = 0.1        # rad
    cruise_v: float = 0.5            # m/s
    safety_stop_range: float = 0.3   # m
    safety_sector: float = math.pi / 6.0  # rad, half-angle of the front sector


@dataclass
class Path:
    waypoints: list                      # [(x, y), ...] world metres
    total_length: float
    grid_cost: tuple = (0, 0)            # (straight steps, diagonal steps)
    goal_yaw: Optional[float] = None

    @property
    def cost_value(self) -> float:
        a, b = self.grid_cost
        return a + b * SQRT2


@dataclass
class NavEvent:
    label: str
    t_start: float
    t_arrive: float
    path_length: float
    aborted: bool = False
    reason: str = ""


def inflate_grid(grid: OccupancyGrid, radius: float) -> OccupancyGrid:
    """Grow obstacles so planning can treat the robot as a point.

    A free cell becomes occupied when its center lies strictly within
    `radius` of an occupied cell center. Inflation always starts from the
    original hard obstacles (kept on the returned grid), so re-inflating at
    the same radius is a no-op.
    """
    hard = grid.hard_occupied if grid.hard_occupied is not None else grid.occupied
    dist_cells = ndimage.distance_transform_edt(~hard)
    inflated = hard | (dist_cells < radius / grid.resolution)
    return OccupancyGrid(grid.resolution, inflated, dict(grid.named_poses), hard)


def clearance_field_m(grid: OccupancyGrid) -> np.ndarray:
    """Per-cell distance (m, center to center) to the nearest hard obstacle."""
    hard = grid.hard_occupied if grid.hard_occupied is not None else grid.occupied
    return ndimage.distance_transform_edt(~hard) * grid.resolution


_NEIGHBORS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def _astar_cells(occ: np.ndarray, start: tuple, goal: tuple):
    """8-connected A* with octile heuristic and exact pair costs.

    Returns (cells, (straight, diag)). Cost pairs order identically to
    their real values here: on these grids distinct pair values differ by
    far more than float64 rounding at this magnitude.
    """
    rows, cols = occ.shape
    if start == goal:
        return [start], (0, 0)
    g: dict = {start: (0, 0)}
    parent: dict = {start: None}
    closed: set = set()
    counter = 0
    sr, sc = start

    def h_value(r: int, c: int) -> float:
        dr = abs(r - goal[0])
        dc = abs(c - goal[1])
        lo, hi = (dr, dc) if dr < dc else (dc, dr)
        return (hi - lo) + lo * SQRT2

    heap = [(h_value(sr, sc), 0, start)]
    while heap:
        _, _, cell = heapq.heappop(heap)
        if cell in closed:
            continue
        if cell == goal:
            cells = []
            cur = cell
            while cur is not None:
                cells.append(cur)
                cur = parent[cur]
            cells.reverse()
            return cells, g[cell]
        closed.add(cell)
        r, c = cell
        a, b = g[cell]
        for dr, dc in _NEIGHBORS:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < rows and 0 <= nc < cols) or occ[nr, nc]:
                continue
            if dr != 0 and dc != 0:
                # no corner cutting past an occupied cardinal neighbor
                if occ[r + dr, c] or occ[r, c + dc]:
                    continue
                ng = (a, b + 1)
            else:
                ng = (a + 1, b)
            old = g.get((nr, nc))
            if old is not None and old[0] + old[1] * SQRT2 <= ng[0] + ng[1] * SQRT2:
                continue
            g[(nr, nc)] = ng
            parent[(nr, nc)] = cell
            counter += 1
            f = ng[0] + ng[1] * SQRT2 + h_value(nr, nc)
            heapq.heappush(heap, (f, counter, (nr, nc)))
    raise NoPathError(f"no route from cell {start} to cell {goal}")


def _segment_clear(edt_m: np.ndarray, res: float, p0: tuple, p1: tuple,
                   clearance: float) -> bool:
    """Every sample along p0-p1 keeps at least `clearance` to hard obstacles."""
    length = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
    n = max(2, int(length / (res * 0.5)) + 1)
    rows, cols = edt_m.shape
    xs = np.linspace(p0[0], p1[0], n)
    ys = np.linspace(p0[1], p1[1], n)
    cc = np.floor(xs / res).astype(np.int64)
    rr = np.floor(ys / res).astype(np.int64)
    if ((rr < 0) | (rr >= rows) | (cc < 0) | (cc >= cols)).any():
        return False
    return bool((edt_m[rr, cc] >= clearance).all())


def _shortcut(points: list, edt_m: np.ndarray, res: float, clearance: float) -> list:
    """Greedy line-of-sight pruning of staircase waypoints."""
    if len(points) <= 2:
        return points
    out = [points[0]]
    i = 0
    while i < len(points) - 1:
        j = len(points) - 1
        while j > i + 1 and not _segment_clear(edt_m, res, points[i], points[j],
                                               clearance):
            j -= 1
        out.append(points[j])
        i = j
    return out


def plan_path(grid: OccupancyGrid, start: tuple, goal: tuple,
              shortcut_clearance: Optional[float] = None) -> Path:
    """Plan on an inflated grid from world start to world goal.

    With shortcut_clearance set, staircase waypoints are pruned wherever a
    straight segment keeps that much distance to the hard obstacles.
    """
    res = grid.resolution
    start_cell = grid.cell_of(start[0], start[1])
    goal_cell = grid.cell_of(goal[0], goal[1])
    for name, (r, c) in (("start", start_cell), ("goal", goal_cell)):
        if not grid.in_bounds(r, c) or grid.occupied[r, c]:
            raise InvalidEndpointError(f"{name} cell {(r, c)} is not free space")
    cells, cost = _astar_cells(grid.occupied, start_cell, goal_cell)
    points = [grid.cell_center(r, c) for r, c in cells]
    points[-1] = (goal[0], goal[1])  # exact goal point inside the goal cell
    if len(points) > 1:
        points[0] = (start[0], start[1])
    if shortcut_clearance is not None and len(points) > 2:
        points = _shortcut(points, clearance_field_m(grid), res, shortcut_clearance)
    length = sum(math.hypot(points[k + 1][0] - points[k][0],
                            points[k + 1][1] - points[k][1])
                 for k in range(len(points) - 1))
    return Path(points, length, cost)


def _along_path(pts: np.ndarray, seg_len: np.ndarray, s: float) -> tuple:
    """Point at arc length s along the polyline."""
    for k in range(len(seg_len)):
        if s <= seg_len[k] or k == len(seg_len) - 1:
            if seg_len[k] == 0.0:
                return tuple(pts[k + 1])
            f = min(1.0, s / seg_len[k])
            return (pts[k][0] + (pts[k + 1][0] - pts[k][0]) * f,
                    pts[k][1] + (pts[k + 1][1] - pts[k][1]) * f)
        s -= seg_len[k]
    return tuple(pts[-1])


def _nearest_progress(pts: np.ndarray, seg_len: np.ndarray, x: float, y: float) -> float:
    """Arc length of the closest polyline point to (x, y)."""
    best_d2 = math.inf
    best_s = 0.0
    acc = 0.0
    for k in range(len(pts) - 1):
        ax, ay = pts[k]
        bx, by = pts[k + 1]
        vx, vy = bx - ax, by - ay
        ll = vx * vx + vy * vy
        t = 0.0 if ll == 0.0 else min(1.0, max(0.0, ((x - ax) * vx + (y - ay) * vy) / ll))
        px, py = ax + vx * t, ay + vy * t
        d2 = (px - x) ** 2 + (py - y) ** 2
        if d2 < best_d2:
            best_d2 = d2
            best_s = acc + math.sqrt(ll) * t
        acc += seg_len[k]
    return best_s


def pure_pursuit(pose: Pose2D, path: Path, cfg: NavConfig,
                 v_ref: Optional[float] = None) -> Twist2D:
    """One follower decision for the current pose.

    Inside goal_pos_tol of the final waypoint the follower stops tracking
    and rotates toward path.goal_yaw (stopping entirely once aligned, or
    immediately when no goal yaw is set). A lookahead target behind the
    robot is handled by turning in place rather than by the curvature
    formula, whose command collapses as the bearing nears pi.

    When v_ref (the previously commanded speed) is given, the carrot
    distance shrinks with it, so slow sharp turns are tracked tightly
    instead of being cut toward the inside of the corner.
    """
    pts = np.asarray(path.waypoints, dtype=float)
    if len(pts) == 1:
        gx, gy = pts[0]
        seg_len = np.zeros(0)
    else:
        seg_len = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
        gx, gy = pts[-1]
    goal_dist = math.hypot(gx - pose.x, gy - pose.y)
    if goal_dist <= cfg.goal_pos_tol:
        if path.goal_yaw is None:
            return Twist2D(0.0, 0.0)
        yaw_err = normalize_angle(path.goal_yaw - pose.theta)
        if abs(yaw_err) <= cfg.goal_yaw_tol:
            return Twist2D(0.0, 0.0)
        rate = min(ALIGN_TURN_RATE, max(ALIGN_MIN_RATE, 2.0 * abs(yaw_err)))
        return Twist2D(0.0, math.copysign(rate, yaw_err))

    lookahead = cfg.lookahead
    if v_ref is not None:
        lookahead = min(lookahead, max(LOOKAHEAD_MIN, LOOKAHEAD_TIME * v_ref))
    if len(pts) == 1:
        tx, ty = gx, gy
    else:
        s = _nearest_progress(pts, seg_len, pose.x, pose.y)
        tx, ty = _along_path(pts, seg_len, s + lookahead)
    dist = math.hypot(tx - pose.x, ty - pose.y)
    alpha = normalize_angle(math.atan2(ty - pose.y, tx - pose.x) - pose.theta)
    if abs(alpha) > ROTATE_FIRST_BEARING:
        return Twist2D(0.0, math.copysign(ALIGN_TURN_RATE, alpha))
    v = cfg.cruise_v * max(0.2, math.cos(alpha))
    v = min(v, max(APPROACH_MIN_V, min(cfg.cruise_v, APPROACH_GAIN * goal_dist)))
    if dist < 1e-9:
        return Twist2D(v, 0.0)
    kappa = 2.0 * math.sin(alpha) / dist
    w = kappa * v
    if abs(w) > MAX_TURN_RATE:
        w = math.copysign(MAX_TURN_RATE, w)
    return Twist2D(v, w)


def safety_gate(scan: LaserScan, t: Twist2D, cfg: NavConfig) -> Twist2D:
    """Zero forward speed when the front sector sees an obstacle too close."""
    if t.v <= 0.0:
        return t
    n = scan.beams
    inc = (scan.angle_max - scan.angle_min) / n
    offsets = scan.angle_min + inc * np.arange(n)
    sector = np.abs(offsets) <= cfg.safety_sector
    returned = scan.ranges <= scan.range_max
    mask = sector & returned
    if mask.any() and float(scan.ranges[mask].min()) < cfg.safety_stop_range:
        return Twist2D(0.0, t.w)
    return t


class Navigator:
    """Stateful single-goal tracker updated at the laser cadence."""

    STATUS_IDLE = "idle"
    STATUS_FOLLOWING = "following"
    STATUS_ALIGNING = "aligning"
    STATUS_ARRIVED = "arrived"

    def __init__(self, grid: OccupancyGrid, cfg: NavConfig | None = None):
        self.cfg = cfg or NavConfig()
        self.grid = grid
        self.inflated = inflate_grid(grid, self.cfg.inflation_radius)
        self._edt_m = clearance_field_m(self.inflated)
        self.path: Optional[Path] = None
        self.status = self.STATUS_IDLE
        self._last_v = 0.0

    def set_goal(self, start_pose: Pose2D, goal: Pose2D) -> Path:
        """Plan toward a goal pose; raises when no route exists."""
        self.path = plan_path(
            self.inflated, (start_pose.x, start_pose.y), (goal.x, goal.y),
            shortcut_clearance=self.cfg.inflation_radius + SHORTCUT_EXTRA_CLEARANCE)
        self.path.goal_yaw = goal.theta
        self.status = self.STATUS_FOLLOWING
        self._last_v = 0.0
        return self.path

    def update(self, pose: Pose2D, scan: Optional[LaserScan]) -> Twist2D:
        """Next twist toward the active goal; (0,0) when idle or arrived."""
        if self.path is None or self.status in (self.STATUS_IDLE, self.STATUS_ARRIVED):
            return Twist2D(0.0, 0.0)
        gx, gy = self.path.waypoints[-1]
        goal_dist = math.hypot(gx - pose.x, gy - pose.y)
        # latch the alignment phase at the tolerance circle; the latch is
        # one-way, so a stopping overshoot cannot bounce back into pursuit
        if self.status == self.STATUS_FOLLOWING and goal_dist <= self.cfg.goal_pos_tol:
            self.status = self.STATUS_ALIGNING
        if self.status == self.STATUS_ALIGNING:
            yaw_goal = self.path.goal_yaw
            yaw_err = 0.0 if yaw_goal is None else normalize_angle(yaw_goal - pose.theta)
            if abs(yaw_err) <= self.cfg.goal_yaw_tol:
                self.status = self.STATUS_ARRIVED
                return Twist2D(0.0, 0.0)
            rate = min(ALIGN_TURN_RATE, max(ALIGN_MIN_RATE, 2.0 * abs(yaw_err)))
            return Twist2D(0.0, math.copysign(rate, yaw_err))
        cmd = pure_pursuit(pose, self.path, self.cfg, v_ref=self._last_v)
        self._last_v = cmd.v  # pre-gate intent, so a gate stop keeps context
        if scan is not None:
            cmd = safety_gate(scan, cmd, self.cfg)
        return cmd
