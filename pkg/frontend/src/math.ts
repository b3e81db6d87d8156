/** Small vector / pose math: FK, facing extraction, camera projection. */

import type { PoseWire, SkeletonMeta } from "./protocol";

export type Vec3 = [number, number, number];
export type Mat3 = number[]; // row-major, 9 entries

export function quatToMatrix(q: number[]): Mat3 {
  const n = Math.hypot(q[0], q[1], q[2], q[3]) || 1;
  const [w, x, y, z] = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
  return [
    1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
    2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
    2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
  ];
}

export function matVec(m: Mat3, v: Vec3): Vec3 {
  return [
    m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
    m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
    m[6] * v[0] + m[7] * v[1] + m[8] * v[2],
  ];
}

/** World joint positions from root translation + per-joint world rotations.
 * Same recurrence as the server: pos[j] = pos[parent] + R[parent] @ offset[j]. */
export function fkPositions(pose: PoseWire, skeleton: SkeletonMeta): Vec3[] {
  const j = skeleton.joint_count;
  const rots = pose.joint_rotations.map(quatToMatrix);
  const out: Vec3[] = new Array(j);
  out[0] = [pose.root_translation[0], pose.root_translation[1], pose.root_translation[2]];
  for (let i = 1; i < j; i++) {
    const p = skeleton.parent_index[i];
    const off = skeleton.offsets[i] as Vec3;
    const d = matVec(rots[p], off);
    out[i] = [out[p][0] + d[0], out[p][1] + d[1], out[p][2] + d[2]];
  }
  return out;
}

/** Horizontal facing of a pose: the root joint's forward axis projected to
 * the ground, (x, z), unit length. Matches the server-side definition. */
export function facingXZ(pose: PoseWire): [number, number] {
  const fwd = matVec(quatToMatrix(pose.joint_rotations[0]), [0, 0, 1]);
  const n = Math.hypot(fwd[0], fwd[2]);
  if (n < 1e-8) return [0, 1];
  return [fwd[0] / n, fwd[2] / n];
}

export function angleBetween2D(a: [number, number], b: [number, number]): number {
  const na = Math.hypot(a[0], a[1]);
  const nb = Math.hypot(b[0], b[1]);
  if (na < 1e-8 || nb < 1e-8) return 0;
  const c = Math.min(1, Math.max(-1, (a[0] * b[0] + a[1] * b[1]) / (na * nb)));
  return Math.acos(c);
}

/** Orbit camera: world -> screen with a simple perspective divide. */
export interface Camera {
  azimuth: number; // radians around the vertical axis
  elevation: number; // radians above the ground
  distance: number;
  target: Vec3;
  fov: number; // vertical, radians
}

export function defaultCamera(): Camera {
  return { azimuth: 0.6, elevation: 0.45, distance: 7.0, target: [0, 0.9, 0], fov: 0.9 };
}

export function project(cam: Camera, p: Vec3, width: number, height: number):
    { x: number; y: number; depth: number } | null {
  const ce = Math.cos(cam.elevation), se = Math.sin(cam.elevation);
  const ca = Math.cos(cam.azimuth), sa = Math.sin(cam.azimuth);
  const eye: Vec3 = [
    cam.target[0] + cam.distance * ce * sa,
    cam.target[1] + cam.distance * se,
    cam.target[2] + cam.distance * ce * ca,
  ];
  // camera basis: forward toward the target, right on the ground, up
  const f: Vec3 = norm3([cam.target[0] - eye[0], cam.target[1] - eye[1], cam.target[2] - eye[2]]);
  const r: Vec3 = norm3(cross3(f, [0, 1, 0]));
  const u: Vec3 = cross3(r, f);
  const d: Vec3 = [p[0] - eye[0], p[1] - eye[1], p[2] - eye[2]];
  const zc = dot3(d, f);
  if (zc < 0.05) return null; // behind the camera
  const scale = height / (2 * Math.tan(cam.fov / 2));
  return {
    x: width / 2 + (dot3(d, r) / zc) * scale,
    y: height / 2 - (dot3(d, u) / zc) * scale,
    depth: zc,
  };
}

function dot3(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

function cross3(a: Vec3, b: Vec3): Vec3 {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

function norm3(v: Vec3): Vec3 {
  const n = Math.hypot(v[0], v[1], v[2]) || 1;
  return [v[0] / n, v[1] / n, v[2] / n];
}
