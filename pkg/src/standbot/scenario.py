"""Care-routine scenario runner and report emitter.

Runs the full simulated stack through the canonical overnight routine:
undock from the charging dock, drive to the bedside, wait while the user
boards, drive to the toilet, wait there, return to the bedside, and re-dock.
The dwell phases stand in for the human actions; their durations are plain
configuration constants. Every run is deterministic for a fixed config and
produces a phase-segmented timing report plus a hashable trajectory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .kinematics import Pose2D
from .drive import DriveUnit
from .loop import LOOP_DT, SimLoop, TrajectoryRow, trajectory_csv_lines, \
    trajectory_hash
from .navigation import Navigator, NavConfig, NoPathError, \
    InvalidEndpointError, clearance_field_m
from .supervisor import BATTERY_CAPACITY_WH, BATTERY_EMPTY_V, \
    BATTERY_FULL_V, Mode, Supervisor
from .world import LidarConfig, MapParseError, OccupancyGrid, World, load_map

BUNDLED_MAP = "living_lab.map"
REQUIRED_MARKERS = ("DOCK", "BED", "TOILET")

# docked robot faces the room diagonally; undocking drives straight out
DOCK_YAW = 0.25 * np.pi
UNDOCK_CLEARANCE_M = 0.8
GOAL_YAWS = {"BED": 0.5 * np.pi, "TOILET": -0.5 * np.pi, "DOCK": DOCK_YAW}

PHASE_NAMES = ("undock", "to_bed", "board_dwell", "to_toilet",
               "toilet_dwell", "to_bed_return", "re_dock")

# generous per-leg budgets; an overrun aborts the run instead of hanging
LEG_TICK_BUDGET = 12000
UNDOCK_TICK_BUDGET = 3000


@dataclass(frozen=True)
class ScenarioConfig:
    map_path: Optional[str] = None        # None -> bundled apartment map
    seed: int = 7
    mode: str = "autonomous"              # "autonomous" | "manual-script"
    goal_labels: Tuple[str, str, str] = ("DOCK", "BED", "TOILET")
    dwell_bed_s: float = 30.0
    dwell_toilet_s: float = 38.0
    speed_level: int = 2
    noise: bool = True
    # manual-script mode only: timed inputs (tick, kind, payload) and length
    script: Tuple = ()
    script_duration_s: float = 10.0

    def __post_init__(self):
        if self.dwell_bed_s < 0 or self.dwell_toilet_s < 0:
            raise ValueError("dwell durations must be >= 0")
        if self.mode not in ("autonomous", "manual-script"):
            raise ValueError(f"unknown scenario mode {self.mode!r}")


@dataclass(frozen=True)
class Phase:
    name: str
    t_start: float
    t_end: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass
class ScenarioReport:
    phases: List[Phase]
    total_s: float
    collision_count: int
    min_clearance_m: float
    battery_used_wh: float
    trajectory_hash: str
    abort_reason: Optional[str] = None
    trajectory: List[TrajectoryRow] = field(default_factory=list, repr=False,
                                            compare=False)

    @property
    def ok(self) -> bool:
        return self.abort_reason is None and self.collision_count == 0


def load_scenario_map(cfg: ScenarioConfig) -> OccupancyGrid:
    if cfg.map_path is None:
        text = resources.files("standbot").joinpath(
            "maps", BUNDLED_MAP).read_text(encoding="utf-8")
    else:
        with open(cfg.map_path, "r", encoding="utf-8") as f:
            text = f.read()
    return load_map(text, required_markers=REQUIRED_MARKERS)


def _assemble(cfg: ScenarioConfig, grid: OccupancyGrid) -> SimLoop:
    dock = grid.named_poses[cfg.goal_labels[0]]
    start = Pose2D(dock.x, dock.y, DOCK_YAW)
    lidar = LidarConfig(noise_sigma=0.01 if cfg.noise else 0.0)
    world = World(grid, start, seed=cfg.seed, lidar_cfg=lidar)
    sup = Supervisor(initial_mode=Mode.DOCKED)
    sup.state.pose = start
    sup.state.speed_level = cfg.speed_level
    # deployment tuning: extra inflation absorbs follower tracking error so
    # the physical footprint keeps an honest margin from every wall
    nav = Navigator(grid, NavConfig(inflation_radius=0.45))
    return SimLoop(world, DriveUnit(), sup, nav)


def _round_t(tick: int) -> float:
    return round(tick * LOOP_DT, 3)


class _PhaseClock:
    def __init__(self, loop: SimLoop):
        self.loop = loop
        self.phases: List[Phase] = []
        self._open_at = 0

    def close(self, name: str) -> None:
        self.phases.append(Phase(
            name, _round_t(self._open_at), _round_t(self.loop.tick)))
        self._open_at = self.loop.tick


def _min_clearance(grid: OccupancyGrid, rows: Sequence[TrajectoryRow]) -> float:
    if not rows:
        return 0.0  # nothing was driven; keep the report JSON-clean
    edt = clearance_field_m(grid)
    res = grid.resolution
    xs = np.array([r.x for r in rows])
    ys = np.array([r.y for r in rows])
    cols = np.clip((xs / res).astype(int), 0, grid.width - 1)
    rws = np.clip((ys / res).astype(int), 0, grid.height - 1)
    return float(edt[rws, cols].min())


def _finish(cfg: ScenarioConfig, loop: SimLoop, clock: _PhaseClock,
            grid: OccupancyGrid, abort: Optional[str]) -> ScenarioReport:
    rows = loop.trajectory
    v_end = loop.supervisor.state.battery_v
    used = (BATTERY_FULL_V - v_end) / (BATTERY_FULL_V - BATTERY_EMPTY_V) \
        * BATTERY_CAPACITY_WH
    return ScenarioReport(
        phases=clock.phases,
        total_s=_round_t(loop.tick),
        collision_count=loop.world.collision_count,
        min_clearance_m=round(_min_clearance(grid, rows), 3),
        battery_used_wh=round(used, 3),
        trajectory_hash=trajectory_hash(rows),
        abort_reason=abort,
        trajectory=rows,
    )


def _nav_leg(loop: SimLoop, goal: Pose2D, budget: int) -> bool:
    loop.navigator.set_goal(loop.supervisor.state.pose, goal)
    return loop.run_until(
        lambda: loop.navigator.status == Navigator.STATUS_ARRIVED, budget)


def _run_autonomous(cfg: ScenarioConfig, grid: OccupancyGrid,
                    loop: SimLoop) -> ScenarioReport:
    clock = _PhaseClock(loop)
    dock_label, bed_label, toilet_label = cfg.goal_labels
    dock = grid.named_poses[dock_label]
    dock_pose = Pose2D(dock.x, dock.y, DOCK_YAW)
    staging = Pose2D(dock.x + UNDOCK_CLEARANCE_M * np.cos(DOCK_YAW),
                     dock.y + UNDOCK_CLEARANCE_M * np.sin(DOCK_YAW),
                     DOCK_YAW)

    def goal_for(label: str) -> Pose2D:
        p = grid.named_poses[label]
        return Pose2D(p.x, p.y, GOAL_YAWS.get(label, 0.0))

    loop.enqueue("event", ("undock", None))
    loop.enqueue("event", ("set_mode", "auto"))

    legs = (
        ("undock", staging, UNDOCK_TICK_BUDGET),
        ("to_bed", goal_for(bed_label), LEG_TICK_BUDGET),
        ("board_dwell", None, int(round(cfg.dwell_bed_s / LOOP_DT))),
        ("to_toilet", goal_for(toilet_label), LEG_TICK_BUDGET),
        ("toilet_dwell", None, int(round(cfg.dwell_toilet_s / LOOP_DT))),
        ("to_bed_return", goal_for(bed_label), LEG_TICK_BUDGET),
        ("re_dock", dock_pose, LEG_TICK_BUDGET),
    )
    for name, goal, budget in legs:
        if goal is None:
            loop.run(budget)
        else:
            try:
                arrived = _nav_leg(loop, goal, budget)
            except (NoPathError, InvalidEndpointError) as exc:
                clock.close(name)
                return _finish(cfg, loop, clock, grid,
                               f"planning failed in {name}: {exc}")
            if not arrived:
                clock.close(name)
                return _finish(cfg, loop, clock, grid,
                               f"{name} did not arrive within budget")
        if name == "re_dock":
            loop.enqueue("event", ("dock_reached", None))
            loop.run(2)  # let the event land inside the phase
        clock.close(name)
    return _finish(cfg, loop, clock, grid, None)


def _run_manual_script(cfg: ScenarioConfig, grid: OccupancyGrid,
                       loop: SimLoop) -> ScenarioReport:
    clock = _PhaseClock(loop)
    by_tick = {}
    for tick, kind, payload in cfg.script:
        by_tick.setdefault(int(tick), []).append((kind, payload))
    loop.enqueue("event", ("undock", None))
    loop.run(int(round(cfg.script_duration_s / LOOP_DT)),
             script=lambda t: by_tick.get(t, ()))
    clock.close("manual_drive")
    return _finish(cfg, loop, clock, grid, None)


def run_scenario(cfg: ScenarioConfig) -> ScenarioReport:
    """Execute the configured routine; never raises for in-sim failures."""
    try:
        grid = load_scenario_map(cfg)
    except (MapParseError, OSError) as exc:
        return ScenarioReport(
            phases=[], total_s=0.0, collision_count=0, min_clearance_m=0.0,
            battery_used_wh=0.0, trajectory_hash=trajectory_hash(()),
            abort_reason=f"map load failed: {exc}")
    loop = _assemble(cfg, grid)
    if cfg.mode == "manual-script":
        return _run_manual_script(cfg, grid, loop)
    return _run_autonomous(cfg, grid, loop)


# -- report emission -----------------------------------------------------------

REPORT_FIELDS = ("phases", "total_s", "collision_count", "min_clearance_m",
                 "battery_used_wh", "trajectory_hash", "abort_reason")


def emit_report(report: ScenarioReport, fmt: str = "json") -> str:
    """Render a report with stable field order; floats carry 3 decimals."""
    if fmt == "json":
        doc = {
            "phases": [{"name": p.name, "t_start": p.t_start, "t_end": p.t_end}
                       for p in report.phases],
            "total_s": report.total_s,
            "collision_count": report.collision_count,
            "min_clearance_m": report.min_clearance_m,
            "battery_used_wh": report.battery_used_wh,
            "trajectory_hash": report.trajectory_hash,
            "abort_reason": report.abort_reason,
        }
        return json.dumps(doc, indent=2) + "\n"
    if fmt == "csv":
        lines = ["phase,t_start,t_end"]
        for p in report.phases:
            lines.append(f"{p.name},{p.t_start:.3f},{p.t_end:.3f}")
        lines.append(
            "summary,total_s=%.3f,collisions=%d,min_clearance_m=%.3f,"
            "battery_used_wh=%.3f,hash=%s,abort=%s"
            % (report.total_s, report.collision_count, report.min_clearance_m,
               report.battery_used_wh, report.trajectory_hash,
               report.abort_reason))
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(text: str) -> ScenarioReport:
    """Inverse of emit_report for the JSON format."""
    doc = json.loads(text)
    return ScenarioReport(
        phases=[Phase(p["name"], p["t_start"], p["t_end"])
                for p in doc["phases"]],
        total_s=doc["total_s"],
        collision_count=doc["collision_count"],
        min_clearance_m=doc["min_clearance_m"],
        battery_used_wh=doc["battery_used_wh"],
        trajectory_hash=doc["trajectory_hash"],
        abort_reason=doc["abort_reason"],
    )


# -- trajectory files ------------------------------------------------------------

def write_trajectory_csv(path: str, rows: Sequence[TrajectoryRow],
                         meta: Optional[dict] = None) -> str:
    """Write rows as CSV with the content hash embedded; returns the hash."""
    body = list(trajectory_csv_lines(rows))
    digest = trajectory_hash(rows)
    with open(path, "w", encoding="utf-8") as f:
        if meta is not None:
            f.write("# meta: " + json.dumps(meta, sort_keys=True) + "\n")
        f.write("# sha256: " + digest + "\n")
        for line in body:
            f.write(line + "\n")
    return digest


def verify_trajectory_csv(path: str) -> Tuple[bool, str, str]:
    """Recompute a trajectory file's hash against its embedded one."""
    stored = ""
    body = []
    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            line = raw.rstrip("\n")
            if line.startswith("# sha256: "):
                stored = line[len("# sha256: "):]
            elif line.startswith("#"):
                continue
            else:
                body.append(line)
    from .loop import hash_csv_text
    recomputed = hash_csv_text(body)
    return recomputed == stored, stored, recomputed
