/**
 * Message types for the NDJSON bridge protocol.
 *
 * The robot side sends one map message when a client connects, then
 * telemetry at 10 Hz. Scan arrays are decimated: every 4th beam of a
 * 360-beam, 270 degree sweep, so decimated beam i points at
 * SCAN_ANGLE_MIN + i * SCAN_STRIDE * SCAN_INCREMENT relative to the
 * robot heading. Beams that hit nothing report a range beyond
 * SCAN_RANGE_MAX.
 */

export interface Pose {
  x: number;
  y: number;
  theta: number;
}

export interface Telemetry {
  t: number;
  pose: Pose;
  mode: string;
  speed_level: number;
  battery_v: number;
  scan: number[];
  phases: string[];
}

export interface MapMessage {
  resolution: number;
  width: number;
  height: number;
  rows: string[];
  markers: Record<string, { x: number; y: number }>;
}

export interface ErrorMessage {
  reason: string;
}

export const SCAN_ANGLE_MIN = -0.75 * Math.PI;
export const SCAN_INCREMENT = (1.5 * Math.PI) / 360;
export const SCAN_STRIDE = 4;
export const SCAN_RANGE_MAX = 30.0;

function isRecord(msg: unknown): msg is Record<string, unknown> {
  return typeof msg === "object" && msg !== null && !Array.isArray(msg);
}

export function asTelemetry(msg: unknown): Telemetry | null {
  if (!isRecord(msg) || msg.type !== "telemetry") return null;
  const pose = msg.pose;
  if (!isRecord(pose)) return null;
  return msg as unknown as Telemetry;
}

export function asMapMessage(msg: unknown): MapMessage | null {
  if (!isRecord(msg) || msg.type !== "map") return null;
  if (!Array.isArray(msg.rows)) return null;
  return msg as unknown as MapMessage;
}

export function asError(msg: unknown): ErrorMessage | null {
  if (!isRecord(msg) || msg.type !== "error") return null;
  return { reason: String(msg.reason ?? "unknown") };
}
