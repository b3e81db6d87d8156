/**
 * Drag gizmos for the three trackers (head, left hand, right hand).
 *
 * Mouse drags move a tracker on the horizontal plane of the 3-D view; a
 * height slider sets its vertical offset; yaw arrows rotate it. All
 * values live in the agent's previous-frame root coordinates, which is
 * exactly what the signal channel expects, so the loop just snapshots
 * this state at 30 Hz.
 */

import type { SparseSignalWire } from "./protocol";
import { identityRot6d } from "./protocol";

export type TrackerName = "head" | "lhand" | "rhand";

export interface Tracker {
  pos: [number, number, number]; // root-relative meters
  yaw: number; // radians about the vertical axis
}

const DEFAULTS: Record<TrackerName, Tracker> = {
  head: { pos: [0, 1.55, 0.02], yaw: 0 },
  lhand: { pos: [0.25, 1.25, 0.35], yaw: 0 },
  rhand: { pos: [-0.25, 1.25, 0.35], yaw: 0 },
};

function yawRot6d(yaw: number): number[] {
  // first two columns of the yaw rotation matrix
  const c = Math.cos(yaw), s = Math.sin(yaw);
  return [c, 0, -s, 0, 1, 0];
}

export class GizmoState {
  trackers: Record<TrackerName, Tracker> = {
    head: { ...DEFAULTS.head, pos: [...DEFAULTS.head.pos] },
    lhand: { ...DEFAULTS.lhand, pos: [...DEFAULTS.lhand.pos] },
    rhand: { ...DEFAULTS.rhand, pos: [...DEFAULTS.rhand.pos] },
  };
  active: TrackerName | null = null;
  lastChange = 0;

  /** Map a 2-D drag (screen pixels) onto the horizontal plane. */
  drag(name: TrackerName, dxPx: number, dyPx: number, metersPerPixel = 0.004): void {
    const t = this.trackers[name];
    t.pos[0] += dxPx * metersPerPixel;
    t.pos[2] -= dyPx * metersPerPixel; // screen-up pushes away from the viewer
    this.clamp(t);
    this.lastChange = Date.now();
  }

  setHeight(name: TrackerName, height: number): void {
    const t = this.trackers[name];
    t.pos[1] = Math.min(2.2, Math.max(0.0, height));
    this.lastChange = Date.now();
  }

  rotate(name: TrackerName, deltaYaw: number): void {
    this.trackers[name].yaw += deltaYaw;
    this.lastChange = Date.now();
  }

  reset(): void {
    for (const name of ["head", "lhand", "rhand"] as TrackerName[]) {
      this.trackers[name] = { ...DEFAULTS[name], pos: [...DEFAULTS[name].pos] };
    }
    this.lastChange = Date.now();
  }

  private clamp(t: Tracker): void {
    t.pos[0] = Math.min(1.2, Math.max(-1.2, t.pos[0]));
    t.pos[2] = Math.min(1.2, Math.max(-1.2, t.pos[2]));
  }

  snapshot(): SparseSignalWire {
    const { head, lhand, rhand } = this.trackers;
    return {
      head_pos: [...head.pos],
      head_rot6d: head.yaw ? yawRot6d(head.yaw) : identityRot6d(),
      lhand_pos: [...lhand.pos],
      lhand_rot6d: lhand.yaw ? yawRot6d(lhand.yaw) : identityRot6d(),
      rhand_pos: [...rhand.pos],
      rhand_rot6d: rhand.yaw ? yawRot6d(rhand.yaw) : identityRot6d(),
    };
  }
}
