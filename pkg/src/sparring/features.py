"""Flat feature vectors for the models, plus normalization statistics.

Layouts (J = joint count):
  motion frame : [root_offset(2), root_turn(2), joint_pos(3J), joint_rot6d(6J), joint_vel(3J)]
  opponent     : [joint_pos(3J), joint_rot6d(6J), joint_vel(3J)]
  root info    : [offset_vs_opp(2), dir_vs_opp(2), ring_dist(1)]
  sparse signal: [head_pos(3), head_rot6d(6), lhand_pos(3), lhand_rot6d(6),
                  rhand_pos(3), rhand_rot6d(6)]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import rot6d_to_matrix, matrix_to_rot6d
from .motion import MotionFrame, OpponentFrame, RootInfo, SparseSignal

ROOT_INFO_DIM = 5
SPARSE_DIM = 27


def motion_dim(joint_count: int) -> int:
    return 4 + 12 * joint_count


def opponent_dim(joint_count: int) -> int:
    return 12 * joint_count


def flatten_motion_frame(f: MotionFrame) -> np.ndarray:
    return np.concatenate([f.root_offset, f.root_turn, f.joint_pos.ravel(),
                           f.joint_rot6d.ravel(), f.joint_vel.ravel()])


def unflatten_motion_frame(v: np.ndarray, joint_count: int,
                           renormalize: bool = True) -> MotionFrame:
    """Inverse of flatten_motion_frame. With renormalize=True (for network
    outputs) the facing turn is re-unitized and 6-D rotations are snapped to
    orthonormal via the usual Gram-Schmidt round trip."""
    j = joint_count
    v = np.asarray(v, dtype=np.float64)
    turn = v[2:4]
    n = np.linalg.norm(turn)
    if renormalize:
        turn = turn / n if n > 1e-8 else np.array([0.0, 1.0])
    rot6d = v[4 + 3 * j:4 + 9 * j].reshape(j, 6)
    if renormalize:
        rot6d = matrix_to_rot6d(rot6d_to_matrix(rot6d))
    return MotionFrame(
        root_offset=v[0:2].copy(),
        root_turn=turn,
        joint_pos=v[4:4 + 3 * j].reshape(j, 3).copy(),
        joint_rot6d=rot6d,
        joint_vel=v[4 + 9 * j:4 + 12 * j].reshape(j, 3).copy(),
    )


def flatten_opponent_frame(f: OpponentFrame) -> np.ndarray:
    return np.concatenate([f.joint_pos.ravel(), f.joint_rot6d.ravel(), f.joint_vel.ravel()])


def flatten_root_info(r: RootInfo) -> np.ndarray:
    return np.concatenate([r.offset_vs_opp, r.dir_vs_opp, [r.ring_dist]])


def unflatten_root_info(v: np.ndarray, renormalize: bool = True) -> RootInfo:
    v = np.asarray(v, dtype=np.float64)
    d = v[2:4]
    n = np.linalg.norm(d)
    if renormalize:
        d = d / n if n > 1e-8 else np.array([0.0, 1.0])
    return RootInfo(v[0:2].copy(), d, float(max(v[4], 0.0)))


def flatten_sparse_signal(s: SparseSignal) -> np.ndarray:
    return np.concatenate([s.head_pos, s.head_rot6d, s.lhand_pos, s.lhand_rot6d,
                           s.rhand_pos, s.rhand_rot6d])


def stack_motion_frames(frames: list[MotionFrame]) -> np.ndarray:
    return np.stack([flatten_motion_frame(f) for f in frames])


def stack_opponent_frames(frames: list[OpponentFrame]) -> np.ndarray:
    return np.stack([flatten_opponent_frame(f) for f in frames])


def stack_root_infos(infos: list[RootInfo]) -> np.ndarray:
    return np.stack([flatten_root_info(r) for r in infos])


def stack_sparse_signals(signals: list[SparseSignal]) -> np.ndarray:
    return np.stack([flatten_sparse_signal(s) for s in signals])


@dataclass
class FeatureStats:
    """Per-dimension mean/std; std is floored so constant dims stay finite."""

    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def fit(x: np.ndarray, floor: float = 1e-4) -> "FeatureStats":
        x = np.asarray(x, dtype=np.float64).reshape(-1, x.shape[-1])
        return FeatureStats(x.mean(axis=0), np.maximum(x.std(axis=0), floor))

    @staticmethod
    def identity(dim: int) -> "FeatureStats":
        return FeatureStats(np.zeros(dim), np.ones(dim))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "FeatureStats":
        return FeatureStats(np.asarray(d["mean"], dtype=np.float64),
                            np.asarray(d["std"], dtype=np.float64))
