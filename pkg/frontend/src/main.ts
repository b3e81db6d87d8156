/** Browser wiring: connect, render loop, gizmo input, signal loop. */

import { GizmoState, TrackerName } from "./gizmos";
import { defaultCamera } from "./math";
import { ReplaySource } from "./replay";
import { connect, Session } from "./session";
import { SignalLoop } from "./signals";
import { render, RenderState } from "./render";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const urlInput = document.getElementById("url") as HTMLInputElement;
const connectBtn = document.getElementById("connect") as HTMLButtonElement;
const resetBtn = document.getElementById("reset") as HTMLButtonElement;
const trackerSel = document.getElementById("tracker") as HTMLSelectElement;
const heightInput = document.getElementById("height") as HTMLInputElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const replayInput = document.getElementById("replay") as HTMLInputElement;

const gizmos = new GizmoState();
let replay: ReplaySource | null = null;
const state: RenderState = {
  skeleton: null,
  ringRadius: 3.0,
  camera: defaultCamera(),
  status: "disconnected",
  latencyMs: null,
};

let session: Session | null = null;
let loop: SignalLoop | null = null;

function setBanner(text: string, bad = false): void {
  banner.textContent = text;
  banner.className = bad ? "banner bad" : "banner";
}

connectBtn.onclick = () => {
  session?.close();
  loop?.stop();
  setBanner("connecting...");
  session = connect(urlInput.value, {
    onStateChange: (s, detail) => {
      state.status = s;
      if (s === "error") setBanner(`connection error: ${detail}`, true);
      else if (s === "closed") setBanner("disconnected", true);
      else setBanner(s);
    },
    onHello: (hello) => {
      state.skeleton = hello.skeleton;
      state.status = `ready (J=${hello.skeleton.joint_count}, d=${hello.d}, ${hello.fps} fps)`;
      setBanner(state.status);
      loop?.stop();
      const source = () =>
        session!.controlMode === "replay" && replay ? replay.next() : gizmos.snapshot();
      loop = new SignalLoop(session!, source, hello.fps,
                            undefined, document as unknown as
                            { hidden: boolean;
                              addEventListener(t: "visibilitychange", h: () => void): void });
      loop.start();
    },
    onServerError: (code, detail) => setBanner(`server error [${code}] ${detail}`, true),
  });
};

resetBtn.onclick = () => {
  gizmos.reset();
  replay?.rewind();
  session?.requestReset();
};

replayInput.onchange = async () => {
  const file = replayInput.files?.[0];
  if (!file || !session) return;
  try {
    replay = ReplaySource.parse(await file.text());
    session.controlMode = "replay";
    replay.rewind();
    session.requestReset();
    setBanner(`replaying ${replay.signals.length} recorded signals`);
  } catch (e) {
    setBanner(`replay load failed: ${(e as Error).message}`, true);
  }
};

// gizmo dragging: left-drag moves the selected tracker on the ground plane,
// shift-drag orbits the camera
let dragging = false;
let orbiting = false;
let lastX = 0;
let lastY = 0;
canvas.addEventListener("mousedown", (e) => {
  dragging = !e.shiftKey;
  orbiting = e.shiftKey;
  lastX = e.offsetX;
  lastY = e.offsetY;
});
window.addEventListener("mouseup", () => {
  dragging = orbiting = false;
});
canvas.addEventListener("mousemove", (e) => {
  const dx = e.offsetX - lastX;
  const dy = e.offsetY - lastY;
  if (dragging) {
    gizmos.drag(trackerSel.value as TrackerName, dx, dy);
  } else if (orbiting) {
    state.camera.azimuth -= dx * 0.008;
    state.camera.elevation = Math.min(1.4, Math.max(0.08, state.camera.elevation + dy * 0.006));
  }
  lastX = e.offsetX;
  lastY = e.offsetY;
});
canvas.addEventListener("wheel", (e) => {
  e.preventDefault();
  state.camera.distance = Math.min(16, Math.max(2.5, state.camera.distance + e.deltaY * 0.01));
});
heightInput.oninput = () => {
  gizmos.setHeight(trackerSel.value as TrackerName, Number(heightInput.value));
};

function frame(): void {
  state.latencyMs = session?.latencyMs ?? null;
  render(ctx, state, session ? session.frames.latest(30) : []);
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);

// periodic heartbeat for the latency readout
setInterval(() => session?.sendHeartbeat(), 1000);
