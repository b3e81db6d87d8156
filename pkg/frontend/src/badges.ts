/**
 * Live quality badges computed client-side over the last 30 frames:
 * root-orient (share of frames facing more than 45 degrees away from the
 * opponent, both agents pooled) and foot skate (mean horizontal foot
 * travel in cm per frame while a foot is below 5 cm). Same definitions as
 * the server-side evaluation, just windowed.
 */

import { angleBetween2D, facingXZ, fkPositions } from "./math";
import type { SkeletonMeta } from "./protocol";
import type { FrameEntry } from "./session";

export interface Badges {
  roPercent: number | null;
  fsCm: number | null;
  frames: number;
}

const RO_THRESHOLD = (45 * Math.PI) / 180;
const CONTACT_HEIGHT = 0.05;

export function computeBadges(entries: FrameEntry[], skeleton: SkeletonMeta): Badges {
  if (entries.length < 2) return { roPercent: null, fsCm: null, frames: entries.length };

  let exceed = 0;
  let roTotal = 0;
  for (const e of entries) {
    for (const [me, other] of [[e.a, e.b], [e.b, e.a]] as const) {
      const f = facingXZ(me);
      const toOpp: [number, number] = [
        other.root_translation[0] - me.root_translation[0],
        other.root_translation[2] - me.root_translation[2],
      ];
      if (angleBetween2D(f, toOpp) > RO_THRESHOLD) exceed += 1;
      roTotal += 1;
    }
  }

  let slide = 0;
  let contacts = 0;
  for (const who of ["a", "b"] as const) {
    let prev = fkPositions(entries[0][who], skeleton);
    for (let i = 1; i < entries.length; i++) {
      const cur = fkPositions(entries[i][who], skeleton);
      for (const j of skeleton.foot_joint_ids) {
        if (cur[j][1] < CONTACT_HEIGHT && prev[j][1] < CONTACT_HEIGHT) {
          slide += Math.hypot(cur[j][0] - prev[j][0], cur[j][2] - prev[j][2]);
          contacts += 1;
        }
      }
      prev = cur;
    }
  }

  return {
    roPercent: (100 * exceed) / roTotal,
    fsCm: contacts ? (100 * slide) / contacts : 0,
    frames: entries.length,
  };
}
