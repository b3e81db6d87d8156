/** Canvas renderer: stick figures, ring circle, facing arrows, badges. */

import { computeBadges } from "./badges";
import { Camera, facingXZ, fkPositions, project, Vec3 } from "./math";
import type { SkeletonMeta } from "./protocol";
import type { FrameEntry } from "./session";

export interface RenderState {
  skeleton: SkeletonMeta | null;
  ringRadius: number;
  camera: Camera;
  status: string;
  latencyMs: number | null;
}

const AGENT_COLORS = { a: "#4f9dff", b: "#ff6fa5" } as const;

export function render(ctx: CanvasRenderingContext2D, state: RenderState,
                       entries: FrameEntry[]): void {
  const { width, height } = ctx.canvas;
  ctx.fillStyle = "#101218";
  ctx.fillRect(0, 0, width, height);
  drawRing(ctx, state, width, height);

  const last = entries.length ? entries[entries.length - 1] : null;
  if (state.skeleton && last) {
    for (const who of ["a", "b"] as const) {
      drawSkeleton(ctx, state, last[who], AGENT_COLORS[who], width, height);
      drawFacingArrow(ctx, state, last[who], AGENT_COLORS[who], width, height);
    }
  }
  drawHud(ctx, state, entries, width);
}

function drawRing(ctx: CanvasRenderingContext2D, state: RenderState,
                  w: number, h: number): void {
  ctx.strokeStyle = "#3a4152";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  let started = false;
  for (let i = 0; i <= 72; i++) {
    const a = (i / 72) * 2 * Math.PI;
    const p = project(state.camera,
                      [state.ringRadius * Math.cos(a), 0, state.ringRadius * Math.sin(a)],
                      w, h);
    if (!p) { started = false; continue; }
    if (!started) { ctx.moveTo(p.x, p.y); started = true; }
    else ctx.lineTo(p.x, p.y);
  }
  ctx.stroke();
}

function drawSkeleton(ctx: CanvasRenderingContext2D, state: RenderState,
                      pose: FrameEntry["a"], color: string, w: number, h: number): void {
  const sk = state.skeleton!;
  const pos = fkPositions(pose, sk);
  const pts = pos.map((p) => project(state.camera, p as Vec3, w, h));
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  for (let j = 1; j < sk.joint_count; j++) {
    const a = pts[sk.parent_index[j]];
    const b = pts[j];
    if (!a || !b) continue;
    ctx.moveTo(a.x, a.y);
    ctx.lineTo(b.x, b.y);
  }
  ctx.stroke();
  const head = pts[sk.head_joint_id];
  if (head) {
    ctx.fillStyle = color;
    ctx.beginPath();
    ctx.arc(head.x, head.y, 5, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawFacingArrow(ctx: CanvasRenderingContext2D, state: RenderState,
                         pose: FrameEntry["a"], color: string, w: number, h: number): void {
  const f = facingXZ(pose);
  const base: Vec3 = [pose.root_translation[0], 0.02, pose.root_translation[2]];
  const tip: Vec3 = [base[0] + 0.5 * f[0], 0.02, base[2] + 0.5 * f[1]];
  const a = project(state.camera, base, w, h);
  const b = project(state.camera, tip, w, h);
  if (!a || !b) return;
  ctx.strokeStyle = color;
  ctx.lineWidth = 2.5;
  ctx.beginPath();
  ctx.moveTo(a.x, a.y);
  ctx.lineTo(b.x, b.y);
  ctx.stroke();
  ctx.beginPath();
  ctx.arc(b.x, b.y, 3, 0, 2 * Math.PI);
  ctx.fillStyle = color;
  ctx.fill();
}

function drawHud(ctx: CanvasRenderingContext2D, state: RenderState,
                 entries: FrameEntry[], w: number): void {
  ctx.fillStyle = "#c8d0e0";
  ctx.font = "13px monospace";
  ctx.fillText(state.status, 12, 20);
  const latency = state.latencyMs === null ? "-" : `${state.latencyMs.toFixed(0)} ms`;
  ctx.fillText(`latency ${latency}`, 12, 38);
  if (state.skeleton && entries.length >= 2) {
    const b = computeBadges(entries.slice(-30), state.skeleton);
    ctx.fillText(`RO ${b.roPercent!.toFixed(0)}%  FS ${b.fsCm!.toFixed(2)} cm`, 12, 56);
  }
  const lastIndex = entries.length ? entries[entries.length - 1].index : null;
  ctx.fillText(`frame ${lastIndex ?? "-"}`, w - 110, 20);
}
