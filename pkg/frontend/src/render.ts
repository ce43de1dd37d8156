// Canvas drawing for the top-down view: reference path, lookahead point,
// vehicle triangle, breadcrumb trail, and the numeric readouts.

import { Camera, worldToCanvas } from "./camera.js";
import { StateFrame } from "./protocol.js";

export interface Scene {
  path: [number, number][] | null;
  crumbs: [number, number][];
  state: StateFrame | null;
  stalled: boolean;
}

export const MAX_CRUMBS = 1500;

export function pushCrumb(scene: Scene, x: number, y: number): void {
  scene.crumbs.push([x, y]);
  if (scene.crumbs.length > MAX_CRUMBS) scene.crumbs.splice(0, scene.crumbs.length - MAX_CRUMBS);
}

function drawPolyline(
  ctx: CanvasRenderingContext2D,
  cam: Camera,
  pts: [number, number][],
  style: string,
  width: number,
  dash: number[] = [],
) {
  if (pts.length < 2) return;
  ctx.strokeStyle = style;
  ctx.lineWidth = width;
  ctx.setLineDash(dash);
  ctx.beginPath();
  const w = ctx.canvas.width;
  const h = ctx.canvas.height;
  const [x0, y0] = worldToCanvas(cam, w, h, pts[0][0], pts[0][1]);
  ctx.moveTo(x0, y0);
  for (let i = 1; i < pts.length; i++) {
    const [x, y] = worldToCanvas(cam, w, h, pts[i][0], pts[i][1]);
    ctx.lineTo(x, y);
  }
  ctx.stroke();
  ctx.setLineDash([]);
}

export function drawScene(ctx: CanvasRenderingContext2D, cam: Camera, scene: Scene): void {
  const w = ctx.canvas.width;
  const h = ctx.canvas.height;
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, w, h);

  if (scene.path) drawPolyline(ctx, cam, scene.path, "#5a6672", 1.5, [7, 5]);
  if (scene.crumbs.length > 1) drawPolyline(ctx, cam, scene.crumbs, "#2f7fd1", 1.2);

  const s = scene.state;
  if (!s) return;

  if (s.ref) {
    const [rx, ry] = worldToCanvas(cam, w, h, s.ref.x, s.ref.y);
    ctx.fillStyle = "#e0b020";
    ctx.beginPath();
    ctx.arc(rx, ry, 4, 0, 2 * Math.PI);
    ctx.fill();
  }

  // vehicle triangle pointing along the heading
  const L = 0.45; // meters, roughly the wheelbase
  const cos = Math.cos(s.theta);
  const sin = Math.sin(s.theta);
  const nose: [number, number] = [s.x + L * cos, s.y + L * sin];
  const tailL: [number, number] = [s.x - 0.5 * L * cos - 0.3 * L * sin, s.y - 0.5 * L * sin + 0.3 * L * cos];
  const tailR: [number, number] = [s.x - 0.5 * L * cos + 0.3 * L * sin, s.y - 0.5 * L * sin - 0.3 * L * cos];
  ctx.fillStyle = s.recording ? "#d64545" : "#3fbf6f";
  ctx.beginPath();
  const [nx, ny] = worldToCanvas(cam, w, h, nose[0], nose[1]);
  const [lx, ly] = worldToCanvas(cam, w, h, tailL[0], tailL[1]);
  const [rx2, ry2] = worldToCanvas(cam, w, h, tailR[0], tailR[1]);
  ctx.moveTo(nx, ny);
  ctx.lineTo(lx, ly);
  ctx.lineTo(rx2, ry2);
  ctx.closePath();
  ctx.fill();

  if (scene.stalled) {
    ctx.fillStyle = "#d64545";
    ctx.font = "16px monospace";
    ctx.fillText("connection stalled", 12, 24);
  }
}

export function readoutText(s: StateFrame | null): string {
  if (!s) return "waiting for state…";
  const e = s.e.map((v) => v.toFixed(3)).join("  ");
  return (
    `t=${s.t.toFixed(1)}s  v=${s.v.toFixed(2)} m/s  ` +
    `e=[${e}]  samples=${s.samples}${s.recording ? "  REC" : ""}`
  );
}
