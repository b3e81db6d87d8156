"""Streaming two-character generation.

Each agent keeps a bounded history (at most W frames / W/d latents); one
engine step plans both agents' next d frames from start-of-step state
(simultaneous-move semantics, so neither can see the other's same-step
output), then commits both chunks behind a barrier. Reactive mode swaps
one agent for a clip replay; sparse mode additionally conditions an agent
on head/hand control signals. Determinism: (weights, seeds, initial
poses) fully determine a run; the two agents draw from independent RNG
streams.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import features
from .diffusion import NumericError
from .motion import (
    MotionClip,
    MotionFrame,
    OpponentFrame,
    RootFrame,
    RootInfo,
    SparseSignal,
    WorldPose,
    clip_from_poses,
    clip_root_frames,
    compute_root_info,
    decode_frames,
    encode_agent_frame,
    encode_opponent_frame,
    extract_root_frame,
    identity_motion_frame,
)
from .geometry import signed_angle2d, yaw_matrix
from .online_decoder import DecoderInputs
from .policy import PolicyInputs, ReactionPolicy
from .skeleton import DEFAULT_ROOT_HEIGHT, Skeleton


@dataclass
class HistoryBuffer:
    """Per-agent sliding window; deque bounds enforce |buffer| <= W."""

    capacity: int
    chunk: int
    motion_frames: deque = field(init=False)
    opp_frames: deque = field(init=False)
    root_infos: deque = field(init=False)
    root_frames: deque = field(init=False)
    world_poses: deque = field(init=False)
    latents: deque = field(init=False)

    def __post_init__(self):
        if self.capacity % self.chunk != 0:
            raise ValueError("buffer capacity must be a multiple of the chunk size")
        w = self.capacity
        self.motion_frames = deque(maxlen=w)
        self.opp_frames = deque(maxlen=w)
        self.root_infos = deque(maxlen=w)
        self.root_frames = deque(maxlen=w)
        self.world_poses = deque(maxlen=w)
        self.latents = deque(maxlen=w // self.chunk)

    def __len__(self) -> int:
        return len(self.motion_frames)

    def append_frame(self, mf: MotionFrame, of: OpponentFrame, ri: RootInfo,
                     rf: RootFrame, pose: WorldPose) -> None:
        self.motion_frames.append(mf)
        self.opp_frames.append(of)
        self.root_infos.append(ri)
        self.root_frames.append(rf)
        self.world_poses.append(pose)

    def opp_chunk_features(self) -> np.ndarray:
        """Raw opponent feature per chunk: last frame of each chunk."""
        d = self.chunk
        n = len(self.motion_frames) // d
        rows = [features.flatten_opponent_frame(self.opp_frames[k * d + d - 1])
                for k in range(n)]
        return np.stack(rows)


@dataclass
class Plan:
    """One agent's planned chunk, computed before the commit barrier."""

    latent: np.ndarray | None
    frames: list[MotionFrame]
    poses: list[WorldPose]
    root_frames: list[RootFrame]
    prev_pose: WorldPose
    prev_root: RootFrame


class PolicyAgent:
    def __init__(self, name: str, policy: ReactionPolicy, skeleton: Skeleton,
                 seed: int, signal_fn=None):
        if policy.config.joint_count != skeleton.joint_count:
            raise ValueError(f"policy trained for J={policy.config.joint_count}, "
                             f"skeleton has J={skeleton.joint_count}")
        self.name = name
        self.policy = policy
        self.skeleton = skeleton
        self.rng = np.random.default_rng(seed)
        self.signal_fn = signal_fn
        w = policy.config.window
        self.buffer = HistoryBuffer(w, policy.config.downsample)
        self.frame_index = 0

    def seed_history(self, own_poses: list[WorldPose], opp_poses: list[WorldPose],
                     ring_center: np.ndarray) -> None:
        d = self.policy.config.downsample
        if len(own_poses) != d or len(opp_poses) != d:
            raise ValueError(f"need exactly {d} seed poses per agent")
        roots = []
        prev = None
        for p in own_poses:
            prev = extract_root_frame(p, self.skeleton, prev=prev)
            roots.append(prev)
        opp_roots = []
        prev = None
        for p in opp_poses:
            prev = extract_root_frame(p, self.skeleton, prev=prev)
            opp_roots.append(prev)
        frames = [identity_motion_frame(own_poses[0], self.skeleton, roots[0])]
        for i in range(1, d):
            frames.append(encode_agent_frame(own_poses[i - 1], own_poses[i], self.skeleton,
                                             root_prev=roots[i - 1], root_cur=roots[i]))
        for i in range(d):
            of = encode_opponent_frame(opp_poses[i], roots[i], self.skeleton,
                                       opp_pose_prev=opp_poses[i - 1] if i > 0 else None)
            ri = compute_root_info(roots[i], opp_roots[i], ring_center)
            self.buffer.append_frame(frames[i], of, ri, roots[i], own_poses[i])
        self.buffer.latents.append(self.policy.encode_history_latents(frames)[0])
        self.frame_index = d

    def _sparse_features(self) -> tuple[np.ndarray | None, np.ndarray | None]:
        """Condition features for the buffered chunks + the target chunk's raw
        signals for the decoder; zero-filled when no provider is attached."""
        cfg = self.policy.config
        if not cfg.sparse_control:
            return None, None
        d = cfg.downsample
        fn = self.signal_fn or (lambda i: SparseSignal.zeros())
        base = self.frame_index - len(self.buffer)
        n = len(self.buffer) // d
        feats = []
        for k in range(n):
            flat = np.concatenate([features.flatten_sparse_signal(fn(base + k * d + j))
                                   for j in range(d)])
            feats.append(self.policy.normalize_sparse_chunk(flat))
        target = np.concatenate([features.flatten_sparse_signal(fn(self.frame_index + j))
                                 for j in range(d)])
        return np.stack(feats), target

    def plan(self) -> Plan:
        buf = self.buffer
        policy = self.policy
        d = policy.config.downsample
        latents = np.stack(buf.latents)
        opp = policy.normalize_opp(buf.opp_chunk_features())
        sparse_feats, sparse_target = self._sparse_features()
        cond = policy.encode_condition(PolicyInputs(latents, opp, sparse_feats))
        z_next = policy.next_latent(cond[-1], self.rng)

        if policy.config.motion_encoder == "none":
            frames = policy.chunk_to_frames(z_next)
        elif policy.config.use_online_decoder:
            out = policy.decode_chunk(DecoderInputs(
                prev_frames=list(buf.motion_frames)[-d:],
                prev_roots=list(buf.root_infos)[-d:],
                latent_prev=buf.latents[-1],
                latent_cur=z_next,
                sparse_chunk=sparse_target,
            ))
            frames = out.next_frames
        else:
            frames = policy.offline_decode_latent(z_next)

        try:
            poses, rfs = decode_frames(frames, buf.root_frames[-1], self.skeleton)
        except ValueError as e:
            raise NumericError(f"agent {self.name} at frame {self.frame_index}: {e}") from e
        for k, p in enumerate(poses):
            if not (np.isfinite(p.root_pos).all() and np.isfinite(p.joint_rot).all()):
                raise NumericError(
                    f"agent {self.name} produced non-finite pose at frame {self.frame_index + k}")
        return Plan(z_next, frames, poses, rfs, buf.world_poses[-1], buf.root_frames[-1])

    def commit(self, own: Plan, opp: Plan, ring_center: np.ndarray) -> None:
        d = self.policy.config.downsample
        for k in range(d):
            opp_prev = opp.prev_pose if k == 0 else opp.poses[k - 1]
            of = encode_opponent_frame(opp.poses[k], own.root_frames[k], self.skeleton,
                                       opp_pose_prev=opp_prev)
            ri = compute_root_info(own.root_frames[k], opp.root_frames[k], ring_center)
            self.buffer.append_frame(own.frames[k], of, ri, own.root_frames[k], own.poses[k])
        self.buffer.latents.append(own.latent)
        self.frame_index += d


class ReplayAgent:
    """Ground-truth character: replays a clip chunk by chunk."""

    def __init__(self, name: str, clip: MotionClip, chunk: int):
        self.name = name
        self.clip = clip
        self.chunk = chunk
        self.roots = clip_root_frames(clip)
        self.frame_index = 0

    def seed_history(self, own_poses, opp_poses, ring_center) -> None:
        self.frame_index = self.chunk

    def _pose(self, i: int) -> WorldPose:
        return self.clip.pose(min(i, self.clip.length - 1))

    def seed_poses(self) -> list[WorldPose]:
        return [self._pose(i) for i in range(self.chunk)]

    def plan(self) -> Plan:
        idx = [min(self.frame_index + k, self.clip.length - 1) for k in range(self.chunk)]
        poses = [self.clip.pose(i) for i in idx]
        rfs = [self.roots[i] for i in idx]
        return Plan(None, [], poses, rfs,
                    self._pose(self.frame_index - 1), self.roots[min(self.frame_index - 1,
                                                                     self.clip.length - 1)])

    def commit(self, own: Plan, opp: Plan, ring_center: np.ndarray) -> None:
        self.frame_index += self.chunk


@dataclass
class StepResult:
    start_frame: int
    poses_a: list[WorldPose]
    poses_b: list[WorldPose]
    facing_deg: list[float]


class DuelEngine:
    """Simultaneous two-agent stepper over a shared frame clock."""

    def __init__(self, agent_a, agent_b, skeleton: Skeleton,
                 seed_poses_a: list[WorldPose], seed_poses_b: list[WorldPose],
                 ring_center=(0.0, 0.0), ring_radius: float = 3.0):
        self.agent_a = agent_a
        self.agent_b = agent_b
        self.skeleton = skeleton
        self.ring_center = np.asarray(ring_center, dtype=np.float64)
        self.ring_radius = float(ring_radius)
        self.boundary_violations = {agent_a.name: 0, agent_b.name: 0}
        agent_a.seed_history(seed_poses_a, seed_poses_b, self.ring_center)
        agent_b.seed_history(seed_poses_b, seed_poses_a, self.ring_center)
        self.frame_index = agent_a.frame_index

    def step(self) -> StepResult:
        if self.agent_a.frame_index != self.agent_b.frame_index:
            raise RuntimeError("agents drifted apart on the frame clock")
        start = self.frame_index
        plan_a = self.agent_a.plan()
        plan_b = self.agent_b.plan()
        # barrier: both plans are fixed before either buffer changes
        self.agent_a.commit(plan_a, plan_b, self.ring_center)
        self.agent_b.commit(plan_b, plan_a, self.ring_center)
        self.frame_index = self.agent_a.frame_index
        facing = []
        for pa, pb, ra, rb in zip(plan_a.poses, plan_b.poses,
                                  plan_a.root_frames, plan_b.root_frames):
            facing.append(np.degrees(signed_angle2d(ra.facing_xz, -rb.facing_xz)))
            for name, rf in ((self.agent_a.name, ra), (self.agent_b.name, rb)):
                if np.linalg.norm(rf.position_xz - self.ring_center) > self.ring_radius:
                    self.boundary_violations[name] += 1
        return StepResult(start, plan_a.poses, plan_b.poses, facing)


def default_stance_poses(skeleton: Skeleton, position_xz, facing_xz,
                         count: int = 4, root_height: float = DEFAULT_ROOT_HEIGHT) -> list[WorldPose]:
    """count identical standing poses at a position, facing a direction."""
    f = np.asarray(facing_xz, dtype=np.float64)
    f = f / np.linalg.norm(f)
    yaw = np.arctan2(f[0], f[1])
    rot = np.broadcast_to(yaw_matrix(yaw), (skeleton.joint_count, 3, 3)).copy()
    pose = WorldPose(np.array([position_xz[0], root_height, position_xz[1]]), rot)
    return [pose] * count


@dataclass
class DuelResult:
    clip_a: MotionClip | None
    clip_b: MotionClip | None
    facing_deg: np.ndarray  # one entry per generated frame (seed excluded)
    frames_total: int
    max_buffer: int
    boundary_violations: dict


def run_duel(policy_a: ReactionPolicy, policy_b: ReactionPolicy, skeleton: Skeleton,
             seed_poses_a: list[WorldPose], seed_poses_b: list[WorldPose],
             total_frames: int, seed_a: int = 1, seed_b: int = 2,
             ring_center=(0.0, 0.0), ring_radius: float = 3.0, fps: float = 30.0,
             signal_fn_a=None, signal_fn_b=None, collect: bool = True,
             on_step=None) -> DuelResult:
    """Free two-character generation until both agents hold total_frames."""
    a = PolicyAgent("a", policy_a, skeleton, seed_a, signal_fn=signal_fn_a)
    b = PolicyAgent("b", policy_b, skeleton, seed_b, signal_fn=signal_fn_b)
    engine = DuelEngine(a, b, skeleton, seed_poses_a, seed_poses_b,
                        ring_center, ring_radius)
    poses_a = list(seed_poses_a) if collect else None
    poses_b = list(seed_poses_b) if collect else None
    facing = []
    max_buffer = max(len(a.buffer), len(b.buffer))
    while engine.frame_index < total_frames:
        res = engine.step()
        max_buffer = max(max_buffer, len(a.buffer), len(b.buffer))
        facing.extend(res.facing_deg)
        if collect:
            poses_a.extend(res.poses_a)
            poses_b.extend(res.poses_b)
        if on_step is not None:
            on_step(res)
    clip_a = clip_from_poses(skeleton, fps, poses_a[:total_frames]) if collect else None
    clip_b = clip_from_poses(skeleton, fps, poses_b[:total_frames]) if collect else None
    return DuelResult(clip_a, clip_b, np.asarray(facing), engine.frame_index,
                      max_buffer, dict(engine.boundary_violations))


def run_reactive(opponent_clip: MotionClip, agent_seed_poses: list[WorldPose],
                 policy: ReactionPolicy, seed: int = 1, ring_center=(0.0, 0.0),
                 ring_radius: float = 3.0, signal_fn=None) -> MotionClip:
    """Generate the agent online against a replayed ground-truth opponent;
    output length matches the opponent clip."""
    d = policy.config.downsample
    skeleton = opponent_clip.skeleton
    agent = PolicyAgent("agent", policy, skeleton, seed, signal_fn=signal_fn)
    replay = ReplayAgent("opponent", opponent_clip, d)
    engine = DuelEngine(agent, replay, skeleton, agent_seed_poses, replay.seed_poses(),
                        ring_center, ring_radius)
    poses = list(agent_seed_poses)
    while engine.frame_index < opponent_clip.length:
        res = engine.step()
        poses.extend(res.poses_a)
    return clip_from_poses(skeleton, opponent_clip.fps, poses[:opponent_clip.length])


def signal_stream_fn(signals: list[SparseSignal]):
    """Zero-order-hold provider over a recorded signal list."""
    def fn(i: int) -> SparseSignal:
        return signals[min(max(i, 0), len(signals) - 1)]
    return fn


def run_sparse(signal_stream: list[SparseSignal], seed_poses: list[WorldPose],
               policy: ReactionPolicy, opponent_clip: MotionClip, seed: int = 1,
               ring_center=(0.0, 0.0), ring_radius: float = 3.0) -> MotionClip:
    """Reactive generation driven by sparse head/hand signals."""
    if not policy.config.sparse_control:
        raise ValueError("policy was not trained with sparse_control")
    return run_reactive(opponent_clip, seed_poses, policy, seed=seed,
                        ring_center=ring_center, ring_radius=ring_radius,
                        signal_fn=signal_stream_fn(signal_stream))
