"""Skeleton definition and forward kinematics.

A pose is stored as a root translation plus per-joint *world* rotations;
joint positions are always derived by FK (offsets live in the parent's
local frame). The default skeleton is a 24-joint SMPL-like body: at
identity it stands at the origin facing +z with its left side toward +x.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROOT_PARENT = -1


@dataclass(frozen=True)
class Skeleton:
    parent_index: tuple[int, ...]
    offsets: np.ndarray  # (J, 3) bone offsets in meters, parent frame
    foot_joint_ids: tuple[int, ...]
    head_joint_id: int
    left_hand_id: int
    right_hand_id: int
    left_shoulder_id: int = 16
    right_shoulder_id: int = 17
    joint_names: tuple[str, ...] = field(default=())

    @property
    def joint_count(self) -> int:
        return len(self.parent_index)

    def validate(self) -> None:
        j = self.joint_count
        if j < 1:
            raise ValueError("skeleton needs at least one joint")
        roots = [i for i, p in enumerate(self.parent_index) if p == ROOT_PARENT]
        if roots != [0]:
            raise ValueError("parent_index must have exactly one root sentinel at joint 0")
        for i, p in enumerate(self.parent_index[1:], start=1):
            if not 0 <= p < j:
                raise ValueError(f"joint {i} has out-of-range parent {p}")
            if p >= i:
                raise ValueError(f"joint {i} must come after its parent {p}")
        if self.offsets.shape != (j, 3):
            raise ValueError(f"offsets must be ({j}, 3)")
        roles = [self.head_joint_id, self.left_hand_id, self.right_hand_id, *self.foot_joint_ids]
        if any(not 0 <= r < j for r in roles):
            raise ValueError("role joint index out of range")
        if len(set(roles)) != len(roles):
            raise ValueError("role joint indices must be distinct")


_DEFAULT_JOINTS = [
    # name, parent, offset (x, y, z); hip offsets are vertical so that root
    # yaw does not move the legs (the sideways split happens at the knees)
    ("pelvis", -1, (0.00, 0.00, 0.00)),
    ("left_hip", 0, (0.00, -0.05, 0.00)),
    ("right_hip", 0, (0.00, -0.05, 0.00)),
    ("spine1", 0, (0.00, 0.12, 0.00)),
    ("left_knee", 1, (0.10, -0.36, 0.00)),
    ("right_knee", 2, (-0.10, -0.36, 0.00)),
    ("spine2", 3, (0.00, 0.12, 0.00)),
    ("left_ankle", 4, (0.00, -0.40, 0.00)),
    ("right_ankle", 5, (0.00, -0.40, 0.00)),
    ("spine3", 6, (0.00, 0.12, 0.00)),
    ("left_foot", 7, (0.00, -0.09, 0.13)),
    ("right_foot", 8, (0.00, -0.09, 0.13)),
    ("neck", 9, (0.00, 0.10, 0.00)),
    ("left_collar", 9, (0.07, 0.05, 0.00)),
    ("right_collar", 9, (-0.07, 0.05, 0.00)),
    ("head", 12, (0.00, 0.12, 0.00)),
    ("left_shoulder", 13, (0.11, 0.00, 0.00)),
    ("right_shoulder", 14, (-0.11, 0.00, 0.00)),
    ("left_elbow", 16, (0.27, 0.00, 0.00)),
    ("right_elbow", 17, (-0.27, 0.00, 0.00)),
    ("left_wrist", 18, (0.25, 0.00, 0.00)),
    ("right_wrist", 19, (-0.25, 0.00, 0.00)),
    ("left_hand", 20, (0.08, 0.00, 0.00)),
    ("right_hand", 21, (-0.08, 0.00, 0.00)),
]

# Standing root height for the default body; with straight legs the foot
# joints sit at 0.03 m, inside the 5 cm ground-contact band.
DEFAULT_ROOT_HEIGHT = 0.93


def default_skeleton() -> Skeleton:
    sk = Skeleton(
        parent_index=tuple(p for _, p, _ in _DEFAULT_JOINTS),
        offsets=np.array([o for _, _, o in _DEFAULT_JOINTS], dtype=np.float64),
        foot_joint_ids=(10, 11),
        head_joint_id=15,
        left_hand_id=22,
        right_hand_id=23,
        left_shoulder_id=16,
        right_shoulder_id=17,
        joint_names=tuple(n for n, _, _ in _DEFAULT_JOINTS),
    )
    sk.validate()
    return sk


def fk_positions(root_pos: np.ndarray, joint_rot: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """World joint positions from root translation + per-joint world rotations.

    root_pos: (..., 3); joint_rot: (..., J, 3, 3). A joint hangs off its
    parent: pos[j] = pos[parent] + R_world[parent] @ offset[j].
    """
    root_pos = np.asarray(root_pos, dtype=np.float64)
    joint_rot = np.asarray(joint_rot, dtype=np.float64)
    j = skeleton.joint_count
    pos = np.empty(joint_rot.shape[:-2] + (3,), dtype=np.float64)
    pos[..., 0, :] = root_pos
    for i in range(1, j):
        p = skeleton.parent_index[i]
        off = skeleton.offsets[i]
        pos[..., i, :] = pos[..., p, :] + np.einsum("...ij,j->...i", joint_rot[..., p, :, :], off)
    return pos
