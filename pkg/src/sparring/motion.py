"""Root-relative motion encodings and their inverses.

Per-frame agent motion is stored as a horizontal root delta (offset +
facing turn, both relative to the previous frame's root frame) plus joint
positions / 6-D rotations / per-frame velocities in the current frame's
root frame. Opponent motion is the counterpart's pose re-expressed in the
agent's current root frame, and the root-info vector locates the agent
relative to the opponent's root frame plus its distance to the ring
center. Everything is pure math over immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    EPS,
    frame_matrix3d,
    matrix_to_quat,
    matrix_to_rot6d,
    quat_to_matrix,
    rot6d_to_matrix,
    to_world_dir2d,
    unit,
)
from .skeleton import Skeleton, fk_positions

IDENTITY_FACING = np.array([0.0, 1.0])


@dataclass(frozen=True)
class WorldPose:
    """Root translation + per-joint world rotation matrices."""

    root_pos: np.ndarray  # (3,)
    joint_rot: np.ndarray  # (J, 3, 3)

    def positions(self, skeleton: Skeleton) -> np.ndarray:
        return fk_positions(self.root_pos, self.joint_rot, skeleton)


@dataclass(frozen=True)
class RootFrame:
    """Horizontal root coordinate: ground position + unit facing, both (x, z)."""

    position_xz: np.ndarray  # (2,)
    facing_xz: np.ndarray  # (2,) unit

    def side_xz(self) -> np.ndarray:
        return np.array([self.facing_xz[1], -self.facing_xz[0]])

    def to_local_point2d(self, q: np.ndarray) -> np.ndarray:
        r = np.asarray(q) - self.position_xz
        return np.stack([r @ self.side_xz(), r @ self.facing_xz], axis=-1)

    def to_local_dir2d(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        return np.stack([v @ self.side_xz(), v @ self.facing_xz], axis=-1)

    def to_world_point2d(self, local: np.ndarray) -> np.ndarray:
        return self.position_xz + to_world_dir2d(self.facing_xz, local)

    def to_world_dir2d(self, local: np.ndarray) -> np.ndarray:
        return to_world_dir2d(self.facing_xz, local)

    def matrix3d(self) -> np.ndarray:
        return frame_matrix3d(self.facing_xz)

    def origin3d(self) -> np.ndarray:
        return np.array([self.position_xz[0], 0.0, self.position_xz[1]])

    def to_local_points3d(self, q: np.ndarray) -> np.ndarray:
        return (np.asarray(q) - self.origin3d()) @ self.matrix3d()

    def to_local_dirs3d(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v) @ self.matrix3d()

    def to_local_rots(self, m: np.ndarray) -> np.ndarray:
        return np.einsum("ji,...jk->...ik", self.matrix3d(), m)

    def to_world_points3d(self, local: np.ndarray) -> np.ndarray:
        return np.asarray(local) @ self.matrix3d().T + self.origin3d()

    def to_world_rots(self, local: np.ndarray) -> np.ndarray:
        return np.einsum("ij,...jk->...ik", self.matrix3d(), local)


@dataclass
class MotionFrame:
    """Agent motion at one frame, root-relative (see module docstring)."""

    root_offset: np.ndarray  # (2,) vs previous frame's root frame
    root_turn: np.ndarray  # (2,) unit, new facing in previous root frame
    joint_pos: np.ndarray  # (J, 3) current root frame
    joint_rot6d: np.ndarray  # (J, 6) current root frame
    joint_vel: np.ndarray  # (J, 3) m/frame, current root frame

    def validate(self) -> None:
        if abs(np.linalg.norm(self.root_turn) - 1.0) > 1e-5:
            raise ValueError("root_turn must be unit length")
        mats = rot6d_to_matrix(self.joint_rot6d)
        err = np.abs(np.einsum("jik,jil->jkl", mats, mats) - np.eye(3)).max()
        if err > 1e-5:
            raise ValueError("joint rotations are not orthonormal")


@dataclass
class OpponentFrame:
    """Opponent pose in the agent's current root frame."""

    joint_pos: np.ndarray  # (J, 3)
    joint_rot6d: np.ndarray  # (J, 6)
    joint_vel: np.ndarray  # (J, 3) m/frame


@dataclass
class RootInfo:
    """Agent location vs the opponent's root frame + ring-center distance."""

    offset_vs_opp: np.ndarray  # (2,)
    dir_vs_opp: np.ndarray  # (2,) unit
    ring_dist: float

    def validate(self) -> None:
        if abs(np.linalg.norm(self.dir_vs_opp) - 1.0) > 1e-5:
            raise ValueError("dir_vs_opp must be unit length")
        if self.ring_dist < 0:
            raise ValueError("ring_dist must be >= 0")


@dataclass
class MotionClip:
    """World-space pose sequence: root translations + world joint quaternions."""

    skeleton: Skeleton
    fps: float
    root_pos: np.ndarray  # (T, 3)
    joint_quat: np.ndarray  # (T, J, 4) wxyz
    meta: dict = field(default_factory=dict)
    _cached_positions: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("clip needs at least one frame")
        if self.fps <= 0:
            raise ValueError("fps must be positive")

    @property
    def length(self) -> int:
        return int(self.root_pos.shape[0])

    def pose(self, i: int) -> WorldPose:
        return WorldPose(self.root_pos[i], quat_to_matrix(self.joint_quat[i]))

    def joint_positions(self) -> np.ndarray:
        """FK world positions (T, J, 3), cached."""
        if self._cached_positions is None:
            rots = quat_to_matrix(self.joint_quat)
            self._cached_positions = fk_positions(self.root_pos, rots, self.skeleton)
        return self._cached_positions

    def slice(self, start: int, stop: int) -> "MotionClip":
        return MotionClip(self.skeleton, self.fps, self.root_pos[start:stop].copy(),
                          self.joint_quat[start:stop].copy(), dict(self.meta))


def clip_from_poses(skeleton: Skeleton, fps: float, poses: list[WorldPose],
                    meta: dict | None = None) -> MotionClip:
    root = np.stack([p.root_pos for p in poses])
    quat = np.stack([matrix_to_quat(p.joint_rot) for p in poses])
    return MotionClip(skeleton, fps, root, quat, meta or {})


def extract_root_frame(pose: WorldPose, skeleton: Skeleton,
                       prev: RootFrame | None = None) -> RootFrame:
    """Horizontal root coordinate of a pose.

    Facing is the root joint's local +z projected to the ground; if that
    degenerates, the shoulder-cross-vertical direction; if both do, the
    previous frame's facing (error when there is no previous frame).
    """
    root_rot = pose.joint_rot[0]
    fwd = root_rot @ np.array([0.0, 0.0, 1.0])
    facing = np.array([fwd[0], fwd[2]])
    if np.linalg.norm(facing) < EPS:
        jpos = pose.positions(skeleton)
        shoulder = jpos[skeleton.left_shoulder_id] - jpos[skeleton.right_shoulder_id]
        # cross(shoulder, up) points forward when the left side is on +x
        facing = np.array([-shoulder[2], shoulder[0]])
    if np.linalg.norm(facing) < EPS:
        if prev is None:
            raise ValueError("degenerate facing and no previous frame to fall back on")
        facing = prev.facing_xz.copy()
    facing = facing / np.linalg.norm(facing)
    return RootFrame(np.array([pose.root_pos[0], pose.root_pos[2]]), facing)


def encode_agent_frame(pose_prev: WorldPose, pose_cur: WorldPose, skeleton: Skeleton,
                       root_prev: RootFrame | None = None,
                       root_cur: RootFrame | None = None) -> MotionFrame:
    """Relative motion of the current pose w.r.t. the previous one (root frames
    may be passed to reuse the facing fallback chain)."""
    if root_prev is None:
        root_prev = extract_root_frame(pose_prev, skeleton)
    if root_cur is None:
        root_cur = extract_root_frame(pose_cur, skeleton, prev=root_prev)
    off = root_prev.to_local_point2d(root_cur.position_xz)
    turn = root_prev.to_local_dir2d(root_cur.facing_xz)
    pos_w = pose_cur.positions(skeleton)
    vel_w = pos_w - pose_prev.positions(skeleton)
    return MotionFrame(
        root_offset=off,
        root_turn=turn,
        joint_pos=root_cur.to_local_points3d(pos_w),
        joint_rot6d=matrix_to_rot6d(root_cur.to_local_rots(pose_cur.joint_rot)),
        joint_vel=root_cur.to_local_dirs3d(vel_w),
    )


def identity_motion_frame(pose: WorldPose, skeleton: Skeleton,
                          root: RootFrame | None = None) -> MotionFrame:
    """Frame-0 convention: zero root motion and zero velocity."""
    if root is None:
        root = extract_root_frame(pose, skeleton)
    pos_w = pose.positions(skeleton)
    j = skeleton.joint_count
    return MotionFrame(
        root_offset=np.zeros(2),
        root_turn=IDENTITY_FACING.copy(),
        joint_pos=root.to_local_points3d(pos_w),
        joint_rot6d=matrix_to_rot6d(root.to_local_rots(pose.joint_rot)),
        joint_vel=np.zeros((j, 3)),
    )


def decode_agent_frame(frame: MotionFrame, prev_root: RootFrame,
                       skeleton: Skeleton) -> tuple[WorldPose, RootFrame]:
    """Inverse of encode_agent_frame: integrate the root delta, place joints."""
    turn = np.asarray(frame.root_turn, dtype=np.float64)
    n = np.linalg.norm(turn)
    if n < EPS:
        raise ValueError("zero-norm root_turn cannot be decoded")
    facing = prev_root.to_world_dir2d(turn / n)
    facing = facing / np.linalg.norm(facing)
    position = prev_root.to_world_point2d(frame.root_offset)
    root = RootFrame(position, facing)
    rot_w = root.to_world_rots(rot6d_to_matrix(frame.joint_rot6d))
    root_pos_w = root.to_world_points3d(frame.joint_pos[0])
    return WorldPose(root_pos_w, rot_w), root


def encode_opponent_frame(opp_pose: WorldPose, agent_root: RootFrame, skeleton: Skeleton,
                          opp_pose_prev: WorldPose | None = None) -> OpponentFrame:
    """Opponent pose (and finite-difference velocity when the previous pose is
    given) in the agent's current root frame."""
    pos_w = opp_pose.positions(skeleton)
    if opp_pose_prev is None:
        vel_w = np.zeros_like(pos_w)
    else:
        vel_w = pos_w - opp_pose_prev.positions(skeleton)
    return OpponentFrame(
        joint_pos=agent_root.to_local_points3d(pos_w),
        joint_rot6d=matrix_to_rot6d(agent_root.to_local_rots(opp_pose.joint_rot)),
        joint_vel=agent_root.to_local_dirs3d(vel_w),
    )


@dataclass
class SparseSignal:
    """VR-style control channel: head and hand poses for one frame, all in the
    previous frame's agent root coordinate."""

    head_pos: np.ndarray  # (3,)
    head_rot6d: np.ndarray  # (6,)
    lhand_pos: np.ndarray  # (3,)
    lhand_rot6d: np.ndarray  # (6,)
    rhand_pos: np.ndarray  # (3,)
    rhand_rot6d: np.ndarray  # (6,)

    @staticmethod
    def zeros() -> "SparseSignal":
        ident = matrix_to_rot6d(np.eye(3))
        return SparseSignal(np.zeros(3), ident.copy(), np.zeros(3), ident.copy(),
                            np.zeros(3), ident.copy())


def sparse_signal_from_pose(pose: WorldPose, prev_root: RootFrame,
                            skeleton: Skeleton) -> SparseSignal:
    pos_w = pose.positions(skeleton)
    ids = (skeleton.head_joint_id, skeleton.left_hand_id, skeleton.right_hand_id)
    pos = [prev_root.to_local_points3d(pos_w[i]) for i in ids]
    rot = [matrix_to_rot6d(prev_root.to_local_rots(pose.joint_rot[i])) for i in ids]
    return SparseSignal(pos[0], rot[0], pos[1], rot[1], pos[2], rot[2])


def extract_sparse_signals(clip: MotionClip, roots: list[RootFrame] | None = None) -> list[SparseSignal]:
    """Per-frame head/hand signals; frame 0 is relative to its own root frame."""
    if roots is None:
        roots = clip_root_frames(clip)
    out = [sparse_signal_from_pose(clip.pose(0), roots[0], clip.skeleton)]
    for i in range(1, clip.length):
        out.append(sparse_signal_from_pose(clip.pose(i), roots[i - 1], clip.skeleton))
    return out


def compute_root_info(agent_root: RootFrame, opp_root: RootFrame,
                      ring_center: np.ndarray) -> RootInfo:
    return RootInfo(
        offset_vs_opp=opp_root.to_local_point2d(agent_root.position_xz),
        dir_vs_opp=opp_root.to_local_dir2d(agent_root.facing_xz),
        ring_dist=float(np.linalg.norm(agent_root.position_xz - np.asarray(ring_center))),
    )


def clip_root_frames(clip: MotionClip) -> list[RootFrame]:
    frames: list[RootFrame] = []
    prev = None
    for i in range(clip.length):
        prev = extract_root_frame(clip.pose(i), clip.skeleton, prev=prev)
        frames.append(prev)
    return frames


def encode_clip(clip: MotionClip) -> tuple[list[MotionFrame], list[RootFrame]]:
    """Per-frame motion encoding of a whole clip (frame 0 uses the identity
    convention so the stream decodes from its own first root frame)."""
    roots = clip_root_frames(clip)
    frames = [identity_motion_frame(clip.pose(0), clip.skeleton, roots[0])]
    for i in range(1, clip.length):
        frames.append(encode_agent_frame(clip.pose(i - 1), clip.pose(i), clip.skeleton,
                                         root_prev=roots[i - 1], root_cur=roots[i]))
    return frames, roots


def decode_frames(frames: list[MotionFrame], initial_root: RootFrame,
                  skeleton: Skeleton) -> tuple[list[WorldPose], list[RootFrame]]:
    poses: list[WorldPose] = []
    roots: list[RootFrame] = []
    prev = initial_root
    for f in frames:
        pose, prev = decode_agent_frame(f, prev, skeleton)
        poses.append(pose)
        roots.append(prev)
    return poses, roots


def encode_opponent_stream(agent_roots: list[RootFrame], opp_clip: MotionClip) -> list[OpponentFrame]:
    """Opponent view per frame: opp pose i in the agent's root frame i."""
    out = []
    for i in range(len(agent_roots)):
        prev = opp_clip.pose(i - 1) if i > 0 else None
        out.append(encode_opponent_frame(opp_clip.pose(i), agent_roots[i],
                                         opp_clip.skeleton, opp_pose_prev=prev))
    return out


def compute_root_info_stream(agent_roots: list[RootFrame], opp_roots: list[RootFrame],
                             ring_center: np.ndarray) -> list[RootInfo]:
    return [compute_root_info(a, o, ring_center) for a, o in zip(agent_roots, opp_roots)]
