"""Interaction clips, training windows, and the on-disk dataset layout.

A dataset root holds clips/ plus manifest.json listing interaction pairs,
ring geometry and the train/test split (split at the pair level so no
window leaks across). Role-swap augmentation emits every window twice,
once per character acting as the agent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import features
from .clipio import ClipError, ERR_LENGTH, load_clip, save_clip
from .motion import (
    MotionClip,
    MotionFrame,
    OpponentFrame,
    RootInfo,
    SparseSignal,
    clip_root_frames,
    compute_root_info_stream,
    encode_clip,
    encode_opponent_stream,
    extract_sparse_signals,
)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = "r2r-dataset/1"


@dataclass
class InteractionClip:
    clip_a: MotionClip
    clip_b: MotionClip
    ring_center: np.ndarray  # (2,)
    ring_radius: float

    def __post_init__(self):
        if self.clip_a.length != self.clip_b.length:
            raise ClipError(ERR_LENGTH,
                            f"clip lengths differ: {self.clip_a.length} vs {self.clip_b.length}")
        if self.clip_a.fps != self.clip_b.fps:
            raise ClipError(ERR_LENGTH,
                            f"clip fps differ: {self.clip_a.fps} vs {self.clip_b.fps}")

    @property
    def length(self) -> int:
        return self.clip_a.length


@dataclass
class TrainingWindow:
    agent_frames: list[MotionFrame]
    opponent_frames: list[OpponentFrame]
    root_infos: list[RootInfo]
    sparse_signals: list[SparseSignal] | None = None


@dataclass
class RoleStream:
    """One character's view of an interaction, flattened for the models."""

    motion: np.ndarray  # (T, motion_dim)
    opponent: np.ndarray  # (T, opponent_dim)
    roots: np.ndarray  # (T, 5)
    sparse: np.ndarray  # (T, 27)
    motion_frames: list[MotionFrame]
    opponent_frames: list[OpponentFrame]
    root_infos: list[RootInfo]
    sparse_signals: list[SparseSignal]


def load_interaction(path_pair: tuple[str | Path, str | Path],
                     ring_center=(0.0, 0.0), ring_radius: float = 3.0) -> InteractionClip:
    a, b = load_clip(path_pair[0]), load_clip(path_pair[1])
    return InteractionClip(a, b, np.asarray(ring_center, dtype=np.float64), float(ring_radius))


def encode_role(agent: MotionClip, opponent: MotionClip, ring_center: np.ndarray) -> RoleStream:
    mf, roots = encode_clip(agent)
    opp_roots = clip_root_frames(opponent)
    of = encode_opponent_stream(roots, opponent)
    ri = compute_root_info_stream(roots, opp_roots, ring_center)
    sp = extract_sparse_signals(agent, roots)
    return RoleStream(
        motion=features.stack_motion_frames(mf),
        opponent=features.stack_opponent_frames(of),
        roots=features.stack_root_infos(ri),
        sparse=features.stack_sparse_signals(sp),
        motion_frames=mf,
        opponent_frames=of,
        root_infos=ri,
        sparse_signals=sp,
    )


def encode_interaction(inter: InteractionClip) -> tuple[RoleStream, RoleStream]:
    """Both role assignments: (agent=A, opponent=B) and the swap."""
    role_a = encode_role(inter.clip_a, inter.clip_b, inter.ring_center)
    role_b = encode_role(inter.clip_b, inter.clip_a, inter.ring_center)
    return role_a, role_b


def window_starts(length: int, window: int, stride: int) -> list[int]:
    if length < window:
        return []
    return list(range(0, length - window + 1, stride))


def make_windows(inter: InteractionClip, window: int, stride: int,
                 downsample_factor: int = 4,
                 with_sparse: bool = False) -> list[TrainingWindow]:
    """Role-swap-augmented crops; zero windows (no error) when the clip is short."""
    if window % downsample_factor != 0:
        raise ValueError(f"window {window} must be divisible by d={downsample_factor}")
    out: list[TrainingWindow] = []
    for role in encode_interaction(inter):
        for s in window_starts(inter.length, window, stride):
            out.append(TrainingWindow(
                agent_frames=role.motion_frames[s:s + window],
                opponent_frames=role.opponent_frames[s:s + window],
                root_infos=role.root_infos[s:s + window],
                sparse_signals=role.sparse_signals[s:s + window] if with_sparse else None,
            ))
    return out


def downsample(clip: MotionClip, target_fps: float) -> MotionClip:
    """Keep every (fps/target)-th frame; the ratio must be a whole number."""
    if target_fps <= 0:
        raise ValueError("target_fps must be positive")
    ratio = clip.fps / target_fps
    k = int(round(ratio))
    if abs(ratio - k) > 1e-9 or k < 1:
        raise ClipError(ERR_LENGTH, f"fps {clip.fps} is not an integer multiple of {target_fps}")
    if k == 1:
        return clip
    return MotionClip(clip.skeleton, target_fps, clip.root_pos[::k].copy(),
                      clip.joint_quat[::k].copy(), dict(clip.meta))


# ---------------------------------------------------------------------------
# dataset directory layout


def save_dataset(root: str | Path, interactions: list[tuple[str, InteractionClip]],
                 train_fraction: float = 0.8, encoding: str = "binary") -> Path:
    """Write clips/ + manifest; split assigned at the pair level, in order."""
    root = Path(root)
    (root / "clips").mkdir(parents=True, exist_ok=True)
    n_train = int(round(train_fraction * len(interactions)))
    pairs = []
    for i, (name, inter) in enumerate(interactions):
        pa, pb = f"clips/{name}_a.clip", f"clips/{name}_b.clip"
        save_clip(inter.clip_a, root / pa, encoding)
        save_clip(inter.clip_b, root / pb, encoding)
        pairs.append({
            "name": name,
            "clip_a": pa,
            "clip_b": pb,
            "ring_center": inter.ring_center.tolist(),
            "ring_radius": inter.ring_radius,
            "split": "train" if i < n_train else "test",
        })
    manifest = {"version": MANIFEST_VERSION, "pairs": pairs}
    path = root / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_manifest(root: str | Path) -> dict:
    path = Path(root) / MANIFEST_NAME
    try:
        manifest = json.loads(path.read_text())
    except OSError as e:
        raise ClipError("io-error", f"cannot read manifest: {e}") from e
    except json.JSONDecodeError as e:
        raise ClipError("malformed-header", f"manifest is not valid JSON: {e}") from e
    if manifest.get("version") != MANIFEST_VERSION:
        raise ClipError("version-mismatch",
                        f"expected {MANIFEST_VERSION}, got {manifest.get('version')!r}")
    return manifest


def load_split(root: str | Path, split: str) -> list[InteractionClip]:
    root = Path(root)
    manifest = load_manifest(root)
    out = []
    for pair in manifest["pairs"]:
        if pair["split"] != split:
            continue
        out.append(load_interaction((root / pair["clip_a"], root / pair["clip_b"]),
                                    ring_center=pair["ring_center"],
                                    ring_radius=pair["ring_radius"]))
    return out
