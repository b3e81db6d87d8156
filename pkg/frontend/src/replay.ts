/**
 * Replay control source: a recorded signal stream (JSON array of signal
 * objects, the same schema the `sparse --signals` file uses) played back
 * in a loop as the tracker input instead of live gizmos.
 */

import type { SparseSignalWire } from "./protocol";
import { validateSignal, zeroSignal } from "./protocol";

export class ReplaySource {
  private index = 0;

  constructor(public signals: SparseSignalWire[]) {}

  static parse(text: string): ReplaySource {
    const doc = JSON.parse(text);
    if (!Array.isArray(doc) || doc.length === 0) {
      throw new Error("replay file must be a non-empty JSON array of signals");
    }
    return new ReplaySource(doc.map((s) => validateSignal(s as SparseSignalWire)));
  }

  next(): SparseSignalWire {
    if (this.signals.length === 0) return zeroSignal();
    const s = this.signals[this.index];
    this.index = (this.index + 1) % this.signals.length;
    return s;
  }

  rewind(): void {
    this.index = 0;
  }
}
