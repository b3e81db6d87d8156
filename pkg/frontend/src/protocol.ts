/**
 * Wire protocol "r2r-stream/1": length-prefixed JSON objects over a
 * websocket text frame, `<decimal utf-8 byte length>:<json>`.
 * Mirrors the server-side schema exactly; every outbound message goes
 * through encode() and every inbound one through decodeAndValidate().
 */

export const STREAM_VERSION = "r2r-stream/1";

export interface SkeletonMeta {
  joint_count: number;
  parent_index: number[];
  offsets: number[][];
  foot_joint_ids: number[];
  head_joint_id: number;
  left_hand_id: number;
  right_hand_id: number;
  joint_names?: string[];
}

export interface PoseWire {
  root_translation: number[];
  joint_rotations: number[][]; // J x 4 wxyz
}

export interface HelloMsg {
  v: string;
  kind: "hello";
  skeleton: SkeletonMeta;
  d: number;
  fps: number;
  w: number;
}

export interface FramesMsg {
  v: string;
  kind: "frames";
  start_frame: number;
  poses: { a: PoseWire; b: PoseWire }[];
}

export interface ErrorMsg {
  v: string;
  kind: "error";
  code: string;
  detail: string;
}

export interface HeartbeatMsg {
  v: string;
  kind: "heartbeat";
  nonce: number;
  t: number;
  t_server?: number;
}

export type ServerMsg = HelloMsg | FramesMsg | ErrorMsg | HeartbeatMsg;

export interface SparseSignalWire {
  head_pos: number[];
  head_rot6d: number[];
  lhand_pos: number[];
  lhand_rot6d: number[];
  rhand_pos: number[];
  rhand_rot6d: number[];
}

export class ProtocolError extends Error {
  constructor(public code: string, detail: string) {
    super(`[${code}] ${detail}`);
  }
}

const textEncoder = new TextEncoder();

export function encode(obj: object): string {
  const payload = JSON.stringify(obj);
  return `${textEncoder.encode(payload).length}:${payload}`;
}

export function decode(raw: string): Record<string, unknown> {
  const sep = raw.indexOf(":");
  if (sep < 0) throw new ProtocolError("malformed-message", "missing length prefix");
  const length = Number(raw.slice(0, sep));
  const payload = raw.slice(sep + 1);
  if (!Number.isInteger(length) || textEncoder.encode(payload).length !== length) {
    throw new ProtocolError("malformed-message", "length prefix does not match payload");
  }
  let obj: unknown;
  try {
    obj = JSON.parse(payload);
  } catch {
    throw new ProtocolError("malformed-message", "payload is not valid JSON");
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    throw new ProtocolError("malformed-message", "payload must be a JSON object");
  }
  return obj as Record<string, unknown>;
}

function isNumArray(v: unknown, n?: number): v is number[] {
  return Array.isArray(v) && (n === undefined || v.length === n) &&
    v.every((x) => typeof x === "number" && Number.isFinite(x));
}

function checkPose(p: unknown, joints: number | null): asserts p is PoseWire {
  const pose = p as PoseWire;
  if (!isNumArray(pose?.root_translation, 3)) {
    throw new ProtocolError("schema-violation", "pose needs root_translation[3]");
  }
  if (!Array.isArray(pose.joint_rotations) ||
      (joints !== null && pose.joint_rotations.length !== joints) ||
      !pose.joint_rotations.every((q) => isNumArray(q, 4))) {
    throw new ProtocolError("schema-violation", "pose needs joint_rotations[J][4]");
  }
}

export function validateServerMsg(obj: Record<string, unknown>,
                                  joints: number | null = null): ServerMsg {
  if (obj.v !== STREAM_VERSION) {
    throw new ProtocolError("version-mismatch", `expected v=${STREAM_VERSION}`);
  }
  switch (obj.kind) {
    case "hello": {
      const sk = obj.skeleton as SkeletonMeta;
      if (typeof obj.d !== "number" || typeof obj.fps !== "number" ||
          typeof obj.w !== "number" || typeof sk?.joint_count !== "number" ||
          !Array.isArray(sk.parent_index) || !Array.isArray(sk.offsets)) {
        throw new ProtocolError("schema-violation", "bad hello fields");
      }
      return obj as unknown as HelloMsg;
    }
    case "frames": {
      if (typeof obj.start_frame !== "number" || !Array.isArray(obj.poses)) {
        throw new ProtocolError("schema-violation", "bad frames fields");
      }
      for (const entry of obj.poses as { a: unknown; b: unknown }[]) {
        checkPose(entry.a, joints);
        checkPose(entry.b, joints);
      }
      return obj as unknown as FramesMsg;
    }
    case "error": {
      if (typeof obj.code !== "string" || typeof obj.detail !== "string") {
        throw new ProtocolError("schema-violation", "bad error fields");
      }
      return obj as unknown as ErrorMsg;
    }
    case "heartbeat": {
      if (typeof obj.nonce !== "number") {
        throw new ProtocolError("schema-violation", "heartbeat needs a nonce");
      }
      return obj as unknown as HeartbeatMsg;
    }
    default:
      throw new ProtocolError("schema-violation", `unknown server kind ${String(obj.kind)}`);
  }
}

const SIGNAL_FIELDS: [keyof SparseSignalWire, number][] = [
  ["head_pos", 3], ["head_rot6d", 6], ["lhand_pos", 3],
  ["lhand_rot6d", 6], ["rhand_pos", 3], ["rhand_rot6d", 6],
];

export function validateSignal(sig: SparseSignalWire): SparseSignalWire {
  for (const [name, n] of SIGNAL_FIELDS) {
    if (!isNumArray(sig[name], n)) {
      throw new ProtocolError("schema-violation", `signal field ${name} must be ${n} numbers`);
    }
  }
  return sig;
}

export function signalMessage(frame: number, signal: SparseSignalWire, t?: number): string {
  validateSignal(signal);
  if (!Number.isInteger(frame) || frame < 0) {
    throw new ProtocolError("schema-violation", "signal frame must be a non-negative integer");
  }
  const msg: Record<string, unknown> = { v: STREAM_VERSION, kind: "signal", frame, signal };
  if (t !== undefined) msg.t = t;
  return encode(msg);
}

export function resetMessage(): string {
  return encode({ v: STREAM_VERSION, kind: "reset" });
}

export function heartbeatMessage(nonce: number, t: number): string {
  return encode({ v: STREAM_VERSION, kind: "heartbeat", nonce, t });
}

export function identityRot6d(): number[] {
  return [1, 0, 0, 0, 1, 0];
}

export function zeroSignal(): SparseSignalWire {
  return {
    head_pos: [0, 0, 0], head_rot6d: identityRot6d(),
    lhand_pos: [0, 0, 0], lhand_rot6d: identityRot6d(),
    rhand_pos: [0, 0, 0], rhand_rot6d: identityRot6d(),
  };
}
