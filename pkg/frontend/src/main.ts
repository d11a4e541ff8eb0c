/**
 * Browser entry point: builds the operator panel and the live map
 * view, and wires DOM input to a ConsoleSession.
 *
 * Layout is functional rather than faithful: a drag pad for the
 * two-axis joystick, three function keys, a latching e-stop with a
 * separate reset, the mode/speed/battery readout, and a canvas that
 * paints the occupancy grid, the robot footprint with a heading
 * tick, and the current scan.
 */

import { ConsoleSession } from "./session";
import { occupiedCells, panelModel, scanToWorldPoints } from "./view";
import type { WorldPoint } from "./view";
import { webSocketDialer } from "./ws_dialer";

const FOOTPRINT_RADIUS_M = 0.35;
const PX_PER_M = 60;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  id: string,
  parent: HTMLElement,
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  node.id = id;
  if (text) node.textContent = text;
  parent.appendChild(node);
  return node;
}

function buildSession(): ConsoleSession {
  const params = new URLSearchParams(window.location.search);
  return new ConsoleSession({
    host: params.get("host") ?? window.location.hostname ?? "127.0.0.1",
    port: Number(params.get("port") ?? "8356"),
    dial: webSocketDialer,
  });
}

function main(): void {
  const root = document.getElementById("console") ?? document.body;
  const banner = el("div", "banner", root, "disconnected");
  const panel = el("div", "panel", root);
  const modeEl = el("span", "mode", panel, "--");
  const levelEl = el("span", "level", panel, "--");
  const batteryEl = el("span", "battery", panel, "--");
  const controls = el("div", "controls", root);
  const canvas = el("canvas", "map", root);
  canvas.width = 900;
  canvas.height = 620;

  const session = buildSession();
  let locked = false;

  const keys: HTMLButtonElement[] = [1, 2, 3].map((k) => {
    const b = el("button", `fkey${k}`, controls, `F${k}`);
    b.onclick = () => {
      if (!locked) session.pressFunctionKey(k as 1 | 2 | 3);
    };
    return b;
  });
  const estopBtn = el("button", "estop", controls, "E-STOP");
  estopBtn.onclick = () => session.pressEstop();
  const resetBtn = el("button", "reset", controls, "RESET");
  resetBtn.onclick = () => session.resetEstop();
  const modeBtn = el("button", "modeswitch", controls, "AUTO");
  modeBtn.onclick = () => {
    if (!locked) session.setMode("auto");
  };

  // drag pad: vertical drag is forward speed, horizontal is turn
  const pad = el("div", "pad", controls, "drag to drive");
  pad.style.cssText =
    "width:160px;height:160px;border:1px solid #888;user-select:none;touch-action:none";
  let dragging = false;
  const drive = (ev: PointerEvent) => {
    const rect = pad.getBoundingClientRect();
    const x = ((ev.clientX - rect.left) / rect.width) * 2 - 1;
    const y = 1 - ((ev.clientY - rect.top) / rect.height) * 2;
    if (!locked) session.setJoystick(x, y);
  };
  pad.onpointerdown = (ev) => {
    dragging = true;
    pad.setPointerCapture(ev.pointerId);
    drive(ev);
  };
  pad.onpointermove = (ev) => {
    if (dragging) drive(ev);
  };
  const release = () => {
    dragging = false;
    session.releaseJoystick();
  };
  pad.onpointerup = release;
  pad.onpointercancel = release;

  window.addEventListener("keydown", (ev) => {
    if (ev.key === " ") session.pressEstop();
    if (locked || ev.repeat) return;
    if (ev.key === "ArrowUp") session.setJoystick(0, 1);
    if (ev.key === "ArrowDown") session.setJoystick(0, -1);
    if (ev.key === "ArrowLeft") session.setJoystick(-1, 0);
    if (ev.key === "ArrowRight") session.setJoystick(1, 0);
  });
  window.addEventListener("keyup", (ev) => {
    if (ev.key.startsWith("Arrow")) session.releaseJoystick();
  });

  let grid: WorldPoint[] = [];
  session.onMap((map) => {
    grid = occupiedCells(map);
    const routines = el("div", "routines", controls);
    routines.textContent = "";
    for (const label of Object.keys(map.markers)) {
      const b = document.createElement("button");
      b.textContent = `go: ${label}`;
      b.onclick = () => {
        if (!locked) session.startRoutine(label);
      };
      routines.appendChild(b);
    }
  });

  const ctx = canvas.getContext("2d");

  function paint(): void {
    if (!ctx) return;
    const model = panelModel(session, Date.now());
    banner.textContent = model.estopped
      ? "EMERGENCY STOP"
      : model.connected
        ? "connected"
        : "disconnected";
    banner.style.background = model.estopped
      ? "#c22"
      : model.connected
        ? "#2a2"
        : "#888";
    modeEl.textContent = model.mode;
    levelEl.textContent = `level ${model.speedLevel}`;
    batteryEl.textContent = model.battery;
    locked = model.controlsLocked;
    for (const b of keys) b.disabled = locked;
    modeBtn.disabled = locked;
    resetBtn.disabled = false;

    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const toPx = (p: WorldPoint): [number, number] => [
      p.x * PX_PER_M,
      canvas.height - p.y * PX_PER_M,
    ];
    ctx.fillStyle = "#444";
    for (const c of grid) {
      const [px, py] = toPx(c);
      ctx.fillRect(px - 1.5, py - 1.5, 3, 3);
    }
    const t = session.telemetry;
    if (t) {
      ctx.fillStyle = "#c60";
      for (const p of scanToWorldPoints(t.pose, t.scan)) {
        const [px, py] = toPx(p);
        ctx.fillRect(px - 1, py - 1, 2, 2);
      }
      const [rx, ry] = toPx(t.pose);
      ctx.strokeStyle = "#08c";
      ctx.beginPath();
      ctx.arc(rx, ry, FOOTPRINT_RADIUS_M * PX_PER_M, 0, 2 * Math.PI);
      ctx.stroke();
      ctx.beginPath();
      ctx.moveTo(rx, ry);
      ctx.lineTo(
        rx + FOOTPRINT_RADIUS_M * PX_PER_M * Math.cos(t.pose.theta),
        ry - FOOTPRINT_RADIUS_M * PX_PER_M * Math.sin(t.pose.theta),
      );
      ctx.stroke();
    }
    if (model.stale || !model.connected) {
      ctx.fillStyle = "rgba(128,128,128,0.5)";
      ctx.fillRect(0, 0, canvas.width, canvas.height);
    }
  }

  session.onTelemetry(() => paint());
  session.onConnection(() => paint());
  setInterval(paint, 250); // keeps the stale overlay honest between frames
  session.start();
  paint();
}

main();
