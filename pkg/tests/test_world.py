import math
import textwrap

import numpy as np
import pytest

from oracles import march_ray, march_scan
from standbot.kinematics import Pose2D, RobotParams, Twist2D, twist_to_wheel_rpm
from standbot.world import (
    LidarConfig,
    MapParseError,
    OccupancyGrid,
    SensorOriginError,
    World,
    lidar_scan,
    load_map,
)

RES = 0.05


def open_grid(cols, rows):
    return OccupancyGrid(RES, np.zeros((rows, cols), dtype=bool), {})


# -- map loading --------------------------------------------------------------

def test_load_simple_marker_map():
    grid = load_map("...\n.D.\n...")
    assert grid.width == 3 and grid.height == 3
    assert not grid.occupied.any()
    dock = grid.named_poses["DOCK"]
    # middle cell: col 1, middle row
    assert dock == Pose2D(1.5 * RES, 1.5 * RES, 0.0)


def test_load_map_orientation():
    # first text line is the top edge (highest y)
    grid = load_map("###\n...\nD..")
    assert grid.occupied[2].all()          # row 2 = top
    assert not grid.occupied[0].any()
    assert grid.named_poses["DOCK"].y == 0.5 * RES


def test_load_ragged():
    with pytest.raises(MapParseError, match="line 2"):
        load_map("...\n..\n...")


def test_load_duplicate_marker():
    with pytest.raises(MapParseError, match="duplicate"):
        load_map("D.D")


def test_load_unknown_char():
    with pytest.raises(MapParseError, match="line 1 col 2"):
        load_map(".x.")


def test_load_missing_required():
    with pytest.raises(MapParseError, match="TOILET"):
        load_map("D..", required_markers=("DOCK", "TOILET"))
    grid = load_map("D.T", required_markers=("DOCK", "TOILET"))
    assert set(grid.named_poses) == {"DOCK", "TOILET"}


def test_load_empty():
    with pytest.raises(MapParseError):
        load_map("")


# -- sim stepping -------------------------------------------------------------

def test_step_zero_rpm():
    w = World(open_grid(100, 100), Pose2D(1.0, 1.0, 0.5))
    w.step(0.0, 0.0, 0.01)
    assert w.pose == Pose2D(1.0, 1.0, 0.5)
    assert w.time == 0.01
    assert w.collision_count == 0


def test_step_half_meter_per_second():
    w = World(open_grid(200, 200), Pose2D(2.0, 2.0, 0.0))
    rpm, _ = twist_to_wheel_rpm(Twist2D(0.5, 0.0), RobotParams())
    for _ in range(100):
        w.step(rpm, rpm, 0.01)
    assert abs(w.pose.x - 2.5) < 1e-6
    assert abs(w.pose.y - 2.0) < 1e-12
    # the rounded 63.66 figure lands short of 0.5 m by ~1.6e-5
    w2 = World(open_grid(200, 200), Pose2D(2.0, 2.0, 0.0))
    for _ in range(100):
        w2.step(63.66, 63.66, 0.01)
    assert abs(w2.pose.x - 2.0 - 0.4999844) < 1e-6


def test_wall_rejects_motion():
    occ = np.zeros((20, 60), dtype=bool)
    occ[:, 59] = True  # wall at x = 2.95..3.00
    grid = OccupancyGrid(RES, occ, {})
    w = World(grid, Pose2D(0.5, 0.5, 0.0))
    rpm, _ = twist_to_wheel_rpm(Twist2D(0.5, 0.0), RobotParams())
    for _ in range(600):  # 6 s, plenty to reach the wall
        w.step(rpm, rpm, 0.01)
    assert w.collision_count > 0
    # frozen just outside footprint contact with the wall face at x=2.95
    assert 2.95 - 0.35 - 0.01 < w.pose.x <= 2.95 - 0.35 + 1e-9
    assert not w.footprint_collides(w.pose.x, w.pose.y)


def test_rotation_in_place_never_collides():
    occ = np.zeros((20, 60), dtype=bool)
    occ[:, 59] = True
    grid = OccupancyGrid(RES, occ, {})
    w = World(grid, Pose2D(2.60, 0.5, 0.0))  # footprint exactly at contact
    before = w.collision_count
    for _ in range(100):
        w.step(-30.0, 30.0, 0.01)  # spin
    assert w.collision_count == before
    assert abs(w.pose.x - 2.60) < 1e-12


# -- lidar --------------------------------------------------------------------

def wall_map():
    # enclosed 3 m x 1.5 m box, inner walls at x=0.05..2.95, y=0.05..1.45
    occ = np.zeros((30, 60), dtype=bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    return OccupancyGrid(RES, occ, {})


def test_lidar_flat_wall_normal():
    grid = wall_map()
    cfg = LidarConfig(noise_sigma=0.0)
    # facing +x from x=1.95: wall inner face at x=2.95 is 1.0 m ahead
    scan = lidar_scan(grid, Pose2D(1.95, 0.75, 0.0), cfg)
    forward = scan.ranges[180]  # beam at exactly 0 offset
    assert abs(forward - 1.0) < 1e-9


def test_lidar_beam_geometry():
    cfg = LidarConfig()
    assert cfg.increment == (cfg.angle_max - cfg.angle_min) / cfg.beams
    assert abs(cfg.angle_min + 0.75 * math.pi) < 1e-12
    grid = wall_map()
    scan = lidar_scan(grid, Pose2D(1.5, 0.75, 0.0), LidarConfig(noise_sigma=0.0))
    assert scan.beams == 360 and len(scan.ranges) == 360


def test_lidar_empty_map_no_returns():
    grid = open_grid(50, 50)
    scan = lidar_scan(grid, Pose2D(1.25, 1.25, 0.3), LidarConfig(noise_sigma=0.0))
    assert (scan.ranges == 31.0).all()


def test_lidar_range_cap():
    # wall further than range_max -> no return
    occ = np.zeros((10, 300), dtype=bool)
    occ[:, 299] = True
    grid = OccupancyGrid(RES, occ, {})
    cfg = LidarConfig(range_max=10.0, noise_sigma=0.0)
    scan = lidar_scan(grid, Pose2D(0.5, 0.25, 0.0), cfg)
    assert scan.ranges[180] == 11.0  # 14.45 m away, past the 10 m cap


def test_lidar_noise_determinism():
    grid = wall_map()
    cfg = LidarConfig(noise_sigma=0.01)
    a = lidar_scan(grid, Pose2D(1.5, 0.75, 0.2), cfg, np.random.default_rng(42))
    b = lidar_scan(grid, Pose2D(1.5, 0.75, 0.2), cfg, np.random.default_rng(42))
    assert np.array_equal(a.ranges, b.ranges)
    c = lidar_scan(grid, Pose2D(1.5, 0.75, 0.2), cfg, np.random.default_rng(43))
    assert not np.array_equal(a.ranges, c.ranges)


def test_lidar_origin_in_wall():
    grid = wall_map()
    with pytest.raises(SensorOriginError):
        lidar_scan(grid, Pose2D(0.025, 0.025, 0.0), LidarConfig())


def test_lidar_ranges_all_valid():
    grid = wall_map()
    scan = lidar_scan(grid, Pose2D(1.0, 0.75, 1.1), LidarConfig(noise_sigma=0.0))
    returned = scan.ranges[scan.ranges <= 30.0]
    assert (returned > 0).all()
    assert ((scan.ranges <= 30.0) | (scan.ranges == 31.0)).all()


def pillar_map():
    occ = np.zeros((60, 80), dtype=bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    occ[25:32, 35:42] = True  # pillar block
    occ[10:14, 55:75] = True  # shelf against nothing
    return OccupancyGrid(RES, occ, {})


def test_lidar_matches_marching_oracle():
    grid = pillar_map()
    cfg = LidarConfig(noise_sigma=0.0)
    rng = np.random.default_rng(314)
    free_rows, free_cols = np.nonzero(~grid.occupied)
    checked = 0
    while checked < 20:
        k = rng.integers(len(free_rows))
        x = (free_cols[k] + rng.uniform(0.2, 0.8)) * RES
        y = (free_rows[k] + rng.uniform(0.2, 0.8)) * RES
        theta = rng.uniform(-math.pi, math.pi)
        scan = lidar_scan(grid, Pose2D(x, y, theta), cfg)
        angles = theta + cfg.angle_min + cfg.increment * np.arange(cfg.beams)
        ref = march_scan(grid.occupied, RES, x, y, angles, cfg.range_max)
        got = np.where(scan.ranges == cfg.no_return, np.inf, scan.ranges)
        both = np.isfinite(ref) & np.isfinite(got)
        assert (np.isfinite(ref) == np.isfinite(got)).all()
        assert np.abs(ref[both] - got[both]).max() < 1.5 * RES
        checked += 1


def test_marching_oracles_agree():
    # the vectorized oracle matches the simple scalar one
    grid = pillar_map()
    angles = [0.0, 0.7, 2.0, -2.4]
    ref = march_scan(grid.occupied, RES, 1.0, 1.0, angles, 10.0)
    for i, ang in enumerate(angles):
        scalar = march_ray(grid.occupied, RES, 1.0, 1.0, ang, 10.0)
        if scalar is None:
            assert not np.isfinite(ref[i])
        else:
            assert abs(scalar - ref[i]) < 1e-12
