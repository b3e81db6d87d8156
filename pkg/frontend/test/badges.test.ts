import { describe, expect, it } from "vitest";

import { computeBadges } from "../src/badges";
import { facingXZ, fkPositions } from "../src/math";
import type { PoseWire, SkeletonMeta } from "../src/protocol";
import type { FrameEntry } from "../src/session";

// minimal 3-joint body: root -> foot (down), root -> head (up)
const SK: SkeletonMeta = {
  joint_count: 3,
  parent_index: [-1, 0, 0],
  offsets: [[0, 0, 0], [0, -0.9, 0], [0, 0.6, 0]],
  foot_joint_ids: [1],
  head_joint_id: 2,
  left_hand_id: 2,
  right_hand_id: 1,
};

function yawQuat(yaw: number): number[] {
  return [Math.cos(yaw / 2), 0, Math.sin(yaw / 2), 0];
}

function pose(x: number, z: number, yaw: number, rootY = 0.93): PoseWire {
  return {
    root_translation: [x, rootY, z],
    joint_rotations: [yawQuat(yaw), yawQuat(yaw), yawQuat(yaw)],
  };
}

function entry(i: number, a: PoseWire, b: PoseWire): FrameEntry {
  return { index: i, a, b };
}

describe("facing extraction", () => {
  it("matches the analytic yaw within 1 degree", () => {
    for (const yaw of [0, 0.5, 1.2, -2.0, 3.0]) {
      const f = facingXZ(pose(0, 0, yaw));
      const expected = [Math.sin(yaw), Math.cos(yaw)];
      const dot = f[0] * expected[0] + f[1] * expected[1];
      const deg = (Math.acos(Math.min(1, Math.max(-1, dot))) * 180) / Math.PI;
      expect(deg).toBeLessThan(1.0);
    }
  });
});

describe("fk", () => {
  it("hangs children off their parents", () => {
    const p = fkPositions(pose(1, 2, 0), SK);
    expect(p[0]).toEqual([1, 0.93, 2]);
    expect(p[1][1]).toBeCloseTo(0.93 - 0.9, 6);
    expect(p[2][1]).toBeCloseTo(0.93 + 0.6, 6);
  });
});

describe("badges", () => {
  it("facing each other gives RO 0%, apart gives 100%", () => {
    // a at -1 facing +x (yaw pi/2), b at +1 facing -x
    const facing = Array.from({ length: 10 }, (_, i) =>
      entry(i, pose(-1, 0, Math.PI / 2), pose(1, 0, -Math.PI / 2)));
    expect(computeBadges(facing, SK).roPercent).toBe(0);
    const away = Array.from({ length: 10 }, (_, i) =>
      entry(i, pose(-1, 0, -Math.PI / 2), pose(1, 0, Math.PI / 2)));
    expect(computeBadges(away, SK).roPercent).toBe(100);
  });

  it("planted feet give FS 0, gliding feet in contact give positive FS", () => {
    const still = Array.from({ length: 10 }, (_, i) =>
      entry(i, pose(0, 0, 0), pose(1, 0, 0)));
    expect(computeBadges(still, SK).fsCm).toBe(0);
    // feet at 0.03 m gliding 1 cm per frame
    const glide = Array.from({ length: 10 }, (_, i) =>
      entry(i, pose(i * 0.01, 0, 0), pose(1, 0, 0)));
    expect(computeBadges(glide, SK).fsCm).toBeCloseTo(0.5, 6); // b is still: mean halves
  });

  it("needs at least two frames", () => {
    const one = [entry(0, pose(0, 0, 0), pose(1, 0, 0))];
    expect(computeBadges(one, SK).roPercent).toBeNull();
  });
});
