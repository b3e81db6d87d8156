/**
 * The 30 Hz control loop: reads the gizmo state, emits one signal per
 * tick with a monotone frame counter. Never blocked by rendering (it runs
 * on its own interval). While the tab is hidden the loop pauses and a
 * reset is sent on resume, so the server never extrapolates stale input
 * across a long gap.
 */

import type { SparseSignalWire } from "./protocol";
import type { Session } from "./session";

export interface VisibilityLike {
  hidden: boolean;
  addEventListener(type: "visibilitychange", handler: () => void): void;
}

export interface TimerLike {
  setInterval(fn: () => void, ms: number): number;
  clearInterval(id: number): void;
  now(): number;
}

export const realTimer: TimerLike = {
  setInterval: (fn, ms) => setInterval(fn, ms) as unknown as number,
  clearInterval: (id) => clearInterval(id),
  now: () => Date.now(),
};

export class SignalLoop {
  frame = 0;
  running = false;
  paused = false;
  sent = 0;

  private timerId: number | null = null;
  private t0 = 0;

  constructor(private session: Session,
              private readSignal: () => SparseSignalWire,
              private rateHz = 30,
              private timer: TimerLike = realTimer,
              visibility?: VisibilityLike) {
    if (visibility) {
      visibility.addEventListener("visibilitychange", () => {
        if (visibility.hidden) {
          this.paused = true;
        } else if (this.paused) {
          this.paused = false;
          // the server state drifted while we were away: start clean
          this.session.requestReset();
          this.frame = 0;
          this.t0 = this.timer.now();
        }
      });
    }
  }

  start(): void {
    if (this.running) return;
    this.running = true;
    this.t0 = this.timer.now();
    this.timerId = this.timer.setInterval(() => this.tick(), 1000 / this.rateHz);
  }

  stop(): void {
    if (this.timerId !== null) this.timer.clearInterval(this.timerId);
    this.timerId = null;
    this.running = false;
  }

  /** One loop step; exposed for tests driving a fake timer. */
  tick(): void {
    if (!this.running || this.paused) return;
    // frame index from wall clock so a slow tab cannot fall behind the server clock
    const elapsed = this.timer.now() - this.t0;
    this.frame = Math.max(this.frame, Math.round((elapsed / 1000) * this.rateHz));
    this.session.sendSignal(this.frame, this.readSignal());
    this.sent += 1;
    this.frame += 1;
  }
}
