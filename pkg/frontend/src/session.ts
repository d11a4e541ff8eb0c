/**
 * Console session: owns the bridge connection, the reconnect policy,
 * and the joystick send loop.
 *
 * Safety model: control messages are silently dropped while
 * disconnected, and the robot-side watchdog zeros the drive after
 * 0.3 s of command silence, so silence is the safe failure mode. The
 * joystick repeats at 20 Hz while engaged, 6x faster than the
 * watchdog window, and a release always sends one final (0, 0).
 *
 * Ordering rule: joystick axis updates are coalesced per event-loop
 * turn through a microtask, while the e-stop writes to the wire
 * immediately. An e-stop pressed in the same turn as a stick move
 * therefore always reaches the bridge first.
 */

import { asError, asMapMessage, asTelemetry } from "./protocol";
import type { MapMessage, Telemetry } from "./protocol";
import { encode, LineCodec } from "./transport";
import type { Dialer, WireSocket } from "./transport";

export const JOYSTICK_INTERVAL_MS = 50;

export type ConnectionState = "connected" | "disconnected";

export interface SessionOptions {
  host: string;
  port: number;
  dial: Dialer;
  /** First retry delay; doubles per failure up to reconnectCapMs. */
  reconnectBaseMs?: number;
  reconnectCapMs?: number;
  now?: () => number;
}

function clampAxis(v: number): number {
  if (!Number.isFinite(v)) return 0;
  return Math.max(-1, Math.min(1, v));
}

export class ConsoleSession {
  connection: ConnectionState = "disconnected";
  telemetry: Telemetry | null = null;
  map: MapMessage | null = null;
  /** Wall-clock arrival time of the last telemetry, -Infinity before the first. */
  lastTelemetryMs = -Infinity;
  axes: [number, number] = [0, 0];
  engaged = false;
  /** Messages actually written to the wire. */
  sent = 0;
  /** Control inputs dropped because the session was disconnected. */
  suppressed = 0;

  private socket: WireSocket | null = null;
  private codec = new LineCodec();
  private sendTimer: ReturnType<typeof setInterval> | null = null;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private retryDelayMs: number;
  private closed = false;
  private joystickQueued = false;

  private telemetryListeners: ((t: Telemetry) => void)[] = [];
  private mapListeners: ((m: MapMessage) => void)[] = [];
  private connectionListeners: ((s: ConnectionState) => void)[] = [];
  private serverErrorListeners: ((reason: string) => void)[] = [];

  private readonly baseMs: number;
  private readonly capMs: number;
  private readonly now: () => number;

  constructor(private opts: SessionOptions) {
    this.baseMs = opts.reconnectBaseMs ?? 200;
    this.capMs = opts.reconnectCapMs ?? 2000;
    this.retryDelayMs = this.baseMs;
    this.now = opts.now ?? Date.now;
  }

  onTelemetry(cb: (t: Telemetry) => void): void {
    this.telemetryListeners.push(cb);
  }

  onMap(cb: (m: MapMessage) => void): void {
    this.mapListeners.push(cb);
  }

  onConnection(cb: (s: ConnectionState) => void): void {
    this.connectionListeners.push(cb);
  }

  onServerError(cb: (reason: string) => void): void {
    this.serverErrorListeners.push(cb);
  }

  start(): void {
    this.dialNow();
  }

  /** Permanently shut down: no further sends or reconnect attempts. */
  close(): void {
    this.closed = true;
    this.stopSendTimer();
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    const sock = this.socket;
    this.socket = null;
    this.connection = "disconnected";
    if (sock) sock.end();
  }

  // ---- inbound ----

  private dialNow(): void {
    const sock = this.opts.dial(this.opts.host, this.opts.port, () =>
      this.handleOpen(sock),
    );
    this.socket = sock;
    sock.onData((chunk) =>
      this.codec.feed(chunk, (line) => this.handleLine(line)),
    );
    sock.onClose(() => this.handleClose(sock));
    // close always follows; nothing extra to do on error
    sock.onError(() => {});
  }

  private handleOpen(sock: WireSocket): void {
    if (sock !== this.socket || this.closed) return;
    this.connection = "connected";
    this.retryDelayMs = this.baseMs;
    for (const cb of this.connectionListeners) cb("connected");
    // a hold that survived the outage resumes at the usual rate
    if (this.engaged) this.startSendTimer();
  }

  private handleClose(sock: WireSocket): void {
    if (sock !== this.socket) return; // stale socket from an earlier dial
    this.socket = null;
    this.codec.reset();
    this.stopSendTimer();
    const wasConnected = this.connection === "connected";
    this.connection = "disconnected";
    if (wasConnected) {
      for (const cb of this.connectionListeners) cb("disconnected");
    }
    if (!this.closed) this.scheduleRetry();
  }

  private scheduleRetry(): void {
    if (this.retryTimer !== null) return;
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      if (!this.closed) this.dialNow();
    }, this.retryDelayMs);
    this.retryDelayMs = Math.min(this.retryDelayMs * 2, this.capMs);
  }

  private handleLine(line: string): void {
    let msg: unknown;
    try {
      msg = JSON.parse(line);
    } catch {
      return; // a malformed server line is not actionable client-side
    }
    const telemetry = asTelemetry(msg);
    if (telemetry) {
      this.telemetry = telemetry;
      this.lastTelemetryMs = this.now();
      for (const cb of this.telemetryListeners) cb(telemetry);
      return;
    }
    const map = asMapMessage(msg);
    if (map) {
      this.map = map;
      for (const cb of this.mapListeners) cb(map);
      return;
    }
    const err = asError(msg);
    if (err) {
      for (const cb of this.serverErrorListeners) cb(err.reason);
    }
  }

  // ---- outbound ----

  private send(msg: object): boolean {
    if (this.closed || this.connection !== "connected" || !this.socket) {
      this.suppressed += 1;
      return false;
    }
    this.socket.write(encode(msg));
    this.sent += 1;
    return true;
  }

  /** Engage the stick; repeats at 20 Hz until releaseJoystick(). */
  setJoystick(x: number, y: number): void {
    this.axes = [clampAxis(x), clampAxis(y)];
    this.engaged = true;
    this.queueJoystickSend();
    this.startSendTimer();
  }

  /** Disengage: one final (0, 0), then silence. */
  releaseJoystick(): void {
    if (!this.engaged) return;
    this.engaged = false;
    this.stopSendTimer();
    this.axes = [0, 0];
    this.queueJoystickSend();
  }

  /** Not coalesced: hits the wire before queued joystick traffic. */
  pressEstop(): void {
    this.send({ type: "estop" });
  }

  resetEstop(): void {
    this.send({ type: "estop_reset" });
  }

  pressFunctionKey(k: 1 | 2 | 3): void {
    this.send({ type: "function_key", k });
  }

  setMode(mode: "manual" | "auto"): void {
    this.send({ type: "set_mode", mode });
  }

  startRoutine(name: string): void {
    this.send({ type: "start_routine", name });
  }

  private queueJoystickSend(): void {
    if (this.joystickQueued) return;
    this.joystickQueued = true;
    queueMicrotask(() => {
      this.joystickQueued = false;
      this.sendJoystickNow();
    });
  }

  private sendJoystickNow(): void {
    this.send({ type: "joystick", x: this.axes[0], y: this.axes[1] });
  }

  private startSendTimer(): void {
    if (this.sendTimer !== null || this.connection !== "connected") return;
    this.sendTimer = setInterval(
      () => this.sendJoystickNow(),
      JOYSTICK_INTERVAL_MS,
    );
  }

  private stopSendTimer(): void {
    if (this.sendTimer !== null) {
      clearInterval(this.sendTimer);
      this.sendTimer = null;
    }
  }
}
