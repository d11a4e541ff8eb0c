/**
 * Pure view-model helpers: everything the panel and the map painter
 * display, derived from session snapshots with no DOM access.
 */

import {
  SCAN_ANGLE_MIN,
  SCAN_INCREMENT,
  SCAN_RANGE_MAX,
  SCAN_STRIDE,
} from "./protocol";
import type { MapMessage, Pose, Telemetry } from "./protocol";
import type { ConnectionState } from "./session";

/** Telemetry older than this grays the view. */
export const STALE_AFTER_MS = 1000;

export interface PanelModel {
  connected: boolean;
  stale: boolean;
  mode: string;
  speedLevel: string;
  battery: string;
  estopped: boolean;
  /** Estopped locks every control except the reset button. */
  controlsLocked: boolean;
  phases: string[];
}

export function formatBattery(v: number): string {
  return `${v.toFixed(1)} V`;
}

export interface PanelSource {
  connection: ConnectionState;
  telemetry: Telemetry | null;
  lastTelemetryMs: number;
}

export function panelModel(s: PanelSource, nowMs: number): PanelModel {
  const t = s.telemetry;
  const estopped = t !== null && t.mode === "Estopped";
  return {
    connected: s.connection === "connected",
    stale: t === null || nowMs - s.lastTelemetryMs > STALE_AFTER_MS,
    mode: t ? t.mode : "--",
    speedLevel: t ? String(t.speed_level) : "--",
    battery: t ? formatBattery(t.battery_v) : "--",
    estopped,
    controlsLocked: estopped,
    phases: t ? t.phases : [],
  };
}

export interface WorldPoint {
  x: number;
  y: number;
}

/**
 * Transform a decimated scan into world-frame points.
 *
 * Beams that hit nothing report a range beyond SCAN_RANGE_MAX and are
 * skipped rather than painted at a fake distance.
 */
export function scanToWorldPoints(pose: Pose, scan: number[]): WorldPoint[] {
  const points: WorldPoint[] = [];
  for (let i = 0; i < scan.length; i++) {
    const r = scan[i];
    if (!(r <= SCAN_RANGE_MAX)) continue;
    const angle = pose.theta + SCAN_ANGLE_MIN + SCAN_INCREMENT * SCAN_STRIDE * i;
    points.push({
      x: pose.x + r * Math.cos(angle),
      y: pose.y + r * Math.sin(angle),
    });
  }
  return points;
}

/** Occupied cell centers in meters. rows[0] is the bottom row (y = 0). */
export function occupiedCells(map: MapMessage): WorldPoint[] {
  const cells: WorldPoint[] = [];
  for (let row = 0; row < map.rows.length; row++) {
    const line = map.rows[row];
    for (let col = 0; col < line.length; col++) {
      if (line[col] === "#") {
        cells.push({
          x: (col + 0.5) * map.resolution,
          y: (row + 0.5) * map.resolution,
        });
      }
    }
  }
  return cells;
}
