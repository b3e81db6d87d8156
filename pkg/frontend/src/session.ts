/**
 * Session state machine over an r2r-stream/1 socket.
 *
 * Keeps a bounded ring buffer of received frames; only contiguous frame
 * indices are accepted - a gap triggers one resync (reset + buffer clear)
 * rather than rendering torn motion. Latency is estimated from heartbeat
 * echoes. The socket is injected, so the whole thing runs under test
 * without a browser.
 */

import {
  decode,
  FramesMsg,
  heartbeatMessage,
  HelloMsg,
  ProtocolError,
  resetMessage,
  ServerMsg,
  signalMessage,
  SparseSignalWire,
  validateServerMsg,
} from "./protocol";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  set onmessage(handler: (data: string) => void);
  set onclose(handler: () => void);
}

export type ConnectionState = "connecting" | "ready" | "error" | "closed";
export type ControlMode = "gizmo" | "replay";

export interface FrameEntry {
  index: number;
  a: FramesMsg["poses"][number]["a"];
  b: FramesMsg["poses"][number]["b"];
}

export class FrameRing {
  private buf: FrameEntry[] = [];

  constructor(public capacity: number) {}

  push(entry: FrameEntry): void {
    this.buf.push(entry);
    if (this.buf.length > this.capacity) this.buf.splice(0, this.buf.length - this.capacity);
  }

  clear(): void {
    this.buf = [];
  }

  get length(): number {
    return this.buf.length;
  }

  latest(n: number): FrameEntry[] {
    return this.buf.slice(-n);
  }

  last(): FrameEntry | null {
    return this.buf.length ? this.buf[this.buf.length - 1] : null;
  }
}

export interface SessionEvents {
  onStateChange?(state: ConnectionState, detail: string): void;
  onHello?(hello: HelloMsg): void;
  onFrames?(entries: FrameEntry[]): void;
  onServerError?(code: string, detail: string): void;
}

export class Session {
  state: ConnectionState = "connecting";
  statusDetail = "";
  hello: HelloMsg | null = null;
  frames = new FrameRing(240);
  latencyMs: number | null = null;
  controlMode: ControlMode = "gizmo";
  resyncCount = 0;
  droppedMessages = 0;

  private nextExpected: number | null = null;
  private nonce = 0;
  private pendingBeats = new Map<number, number>();

  constructor(private socket: SocketLike, private events: SessionEvents = {},
              private now: () => number = () => Date.now()) {
    socket.onmessage = (data) => this.handleRaw(data);
    socket.onclose = () => this.setState("closed", "socket closed");
  }

  private setState(state: ConnectionState, detail: string): void {
    this.state = state;
    this.statusDetail = detail;
    this.events.onStateChange?.(state, detail);
  }

  handleRaw(raw: string): void {
    let msg: ServerMsg;
    try {
      msg = validateServerMsg(decode(raw), this.hello?.skeleton.joint_count ?? null);
    } catch (e) {
      // a malformed or off-schema server message is surfaced, not fatal
      this.droppedMessages += 1;
      if (e instanceof ProtocolError && this.state === "connecting") {
        this.setState("error", e.message);
      }
      return;
    }
    switch (msg.kind) {
      case "hello":
        this.hello = msg;
        this.nextExpected = null;
        this.frames.clear();
        this.setState("ready", "connected");
        this.events.onHello?.(msg);
        break;
      case "frames":
        this.handleFrames(msg);
        break;
      case "heartbeat": {
        const sent = this.pendingBeats.get(msg.nonce);
        if (sent !== undefined) {
          this.latencyMs = this.now() - sent;
          this.pendingBeats.delete(msg.nonce);
        }
        break;
      }
      case "error":
        this.events.onServerError?.(msg.code, msg.detail);
        break;
    }
  }

  private handleFrames(msg: FramesMsg): void {
    if (this.nextExpected !== null && msg.start_frame !== this.nextExpected) {
      // gap or overlap: resynchronize rather than render torn motion
      this.resyncCount += 1;
      this.frames.clear();
      this.nextExpected = null;
      this.socket.send(resetMessage());
      return;
    }
    const entries: FrameEntry[] = msg.poses.map((p, i) => ({
      index: msg.start_frame + i, a: p.a, b: p.b,
    }));
    for (const e of entries) this.frames.push(e);
    this.nextExpected = msg.start_frame + msg.poses.length;
    this.events.onFrames?.(entries);
  }

  sendSignal(frame: number, signal: SparseSignalWire): void {
    if (this.state !== "ready") return;
    this.socket.send(signalMessage(frame, signal, this.now()));
  }

  sendHeartbeat(): number {
    const nonce = ++this.nonce;
    this.pendingBeats.set(nonce, this.now());
    this.socket.send(heartbeatMessage(nonce, this.now()));
    return nonce;
  }

  requestReset(): void {
    this.frames.clear();
    this.nextExpected = null;
    this.socket.send(resetMessage());
  }

  close(): void {
    this.socket.close();
  }
}

/** Browser entry: wrap a real WebSocket in the SocketLike shape. */
export function connect(url: string, events: SessionEvents = {}): Session {
  const ws = new WebSocket(url);
  const wrapper: SocketLike = {
    send: (d) => ws.send(d),
    close: () => ws.close(),
    set onmessage(h: (data: string) => void) {
      ws.onmessage = (ev) => h(typeof ev.data === "string" ? ev.data : "");
    },
    set onclose(h: () => void) {
      ws.onclose = () => h();
    },
  };
  return new Session(wrapper, events);
}
