"""Command-line front end.

Subcommands: `run` executes a scenario from a config file and emits the
report, `plan` prints the planned route length between two map markers,
`replay` re-verifies the hash embedded in a trajectory CSV, and `serve`
exposes a live simulation over the JSON socket bridge.

Exit codes: 0 success, 1 operational failure (aborted scenario, collision,
hash mismatch, no route), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bridge import serve_bridge
from .drive import DriveUnit
from .kinematics import Pose2D
from .loop import SimLoop
from .navigation import (SHORTCUT_EXTRA_CLEARANCE, InvalidEndpointError,
                         NavConfig, Navigator, NoPathError, inflate_grid,
                         plan_path)
from .scenario import (GOAL_YAWS, ScenarioConfig, emit_report, run_scenario,
                       verify_trajectory_csv, write_trajectory_csv)
from .supervisor import Supervisor
from .world import MARKER_LABELS, LidarConfig, MapParseError, World, load_map

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class ConfigError(ValueError):
    """Config file cannot be parsed or carries a bad field."""


def _to_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _to_labels(v) -> tuple:
    if isinstance(v, (list, tuple)):
        return tuple(str(x) for x in v)
    return tuple(s.strip() for s in str(v).split(",") if s.strip())


_FIELDS = {
    "map_path": str,
    "seed": int,
    "mode": str,
    "goal_labels": _to_labels,
    "dwell_bed_s": float,
    "dwell_toilet_s": float,
    "speed_level": int,
    "noise": _to_bool,
    "script_duration_s": float,
}


def load_config(path: str) -> dict:
    """Read a scenario config: JSON object, or flat `key = value` lines."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            sep = "=" if "=" in line else (":" if ":" in line else None)
            if sep is None:
                raise ConfigError(
                    f"{path}:{lineno}: expected `key = value`, got {line!r}")
            key, value = line.split(sep, 1)
            raw[key.strip()] = value.strip().strip("'\"")
    cfg = {}
    for key, value in raw.items():
        coerce = _FIELDS.get(key)
        if coerce is None:
            known = ", ".join(sorted(_FIELDS))
            raise ConfigError(f"{path}: unknown field {key!r} (known: {known})")
        try:
            cfg[key] = coerce(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: field {key!r}: {exc}") from exc
    return cfg


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_run(args) -> int:
    try:
        overrides = load_config(args.config)
        cfg = ScenarioConfig(**overrides)
    except OSError as exc:
        return _fail(f"cannot read config: {exc}", EXIT_USAGE)
    except (ConfigError, ValueError) as exc:
        return _fail(str(exc), EXIT_USAGE)
    report = run_scenario(cfg)
    text = emit_report(report, args.format)
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
        print(f"report written to {args.report}")
    else:
        sys.stdout.write(text)
    if args.trajectory:
        meta = {"map": cfg.map_path or "bundled", "seed": cfg.seed,
                "mode": cfg.mode}
        write_trajectory_csv(args.trajectory, report.trajectory, meta=meta)
        print(f"trajectory written to {args.trajectory}")
    if not report.ok:
        reason = report.abort_reason or \
            f"{report.collision_count} collision(s)"
        return _fail(f"scenario failed: {reason}", EXIT_FAILURE)
    return EXIT_OK


def _marker_label(name: str) -> str:
    """Accept either a marker label (DOCK) or its map letter (D)."""
    name = name.strip().upper()
    return MARKER_LABELS.get(name, name)


def cmd_plan(args) -> int:
    src, dst = _marker_label(args.src), _marker_label(args.dst)
    try:
        text = Path(args.map).read_text(encoding="utf-8")
    except OSError as exc:
        return _fail(f"cannot read map: {exc}", EXIT_USAGE)
    try:
        grid = load_map(text, required_markers=(src, dst))
    except MapParseError as exc:
        return _fail(str(exc), EXIT_USAGE)
    cfg = NavConfig()
    inflated = inflate_grid(grid, cfg.inflation_radius)
    a, b = grid.named_poses[src], grid.named_poses[dst]
    try:
        path = plan_path(
            inflated, (a.x, a.y), (b.x, b.y),
            shortcut_clearance=cfg.inflation_radius + SHORTCUT_EXTRA_CLEARANCE)
    except (NoPathError, InvalidEndpointError) as exc:
        return _fail(f"no route {src} -> {dst}: {exc}", EXIT_FAILURE)
    print(f"{src} -> {dst}: {path.total_length:.3f} m, "
          f"{len(path.waypoints)} waypoints")
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        ok, stored, recomputed = verify_trajectory_csv(args.trajectory)
    except OSError as exc:
        return _fail(f"cannot read trajectory: {exc}", EXIT_USAGE)
    print(f"stored     {stored}")
    print(f"recomputed {recomputed}")
    print(f"verdict    {'OK' if ok else 'MISMATCH'}")
    return EXIT_OK if ok else EXIT_FAILURE


def _serve_start_pose(grid) -> Pose2D:
    dock = grid.named_poses.get("DOCK")
    if dock is not None:
        return Pose2D(dock.x, dock.y, GOAL_YAWS["DOCK"])
    # no dock marker: start at the free cell nearest the map center
    free = np.argwhere(~grid.occupied)
    if free.size == 0:
        raise MapParseError("map has no free cells")
    center = np.array([grid.height / 2.0, grid.width / 2.0])
    r, c = free[np.argmin(((free - center) ** 2).sum(axis=1))]
    x, y = grid.cell_center(int(r), int(c))
    return Pose2D(x, y, 0.0)


def cmd_serve(args) -> int:
    try:
        text = Path(args.map).read_text(encoding="utf-8")
    except OSError as exc:
        return _fail(f"cannot read map: {exc}", EXIT_USAGE)
    try:
        grid = load_map(text)
        start = _serve_start_pose(grid)
    except MapParseError as exc:
        return _fail(str(exc), EXIT_USAGE)
    lidar = LidarConfig(noise_sigma=0.0) if args.no_noise else None
    world = World(grid, start, seed=args.seed, lidar_cfg=lidar)
    supervisor = Supervisor()
    supervisor.state.pose = start
    loop = SimLoop(world, DriveUnit(), supervisor, Navigator(grid))
    server = serve_bridge(loop, host=args.host, port=args.port, realtime=True)
    print(f"serving {args.map} on {args.host}:{server.port} (Ctrl-C to stop)")
    try:
        server.run()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="standbot",
        description="Scenario runner and live bridge for the standing "
                    "mobility robot simulation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario from a config file")
    p.add_argument("--config", required=True, help="JSON or key=value file")
    p.add_argument("--report", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--trajectory", help="also write the trajectory CSV here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plan", help="print route length between two markers")
    p.add_argument("--map", required=True)
    p.add_argument("--from", dest="src", required=True, metavar="LABEL")
    p.add_argument("--to", dest="dst", required=True, metavar="LABEL")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("replay", help="re-verify a trajectory CSV hash")
    p.add_argument("--trajectory", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="serve a live simulation over a socket")
    p.add_argument("--map", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8355)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--no-noise", action="store_true",
                   help="disable laser range noise")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
