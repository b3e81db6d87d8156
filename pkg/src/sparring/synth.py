"""Procedural two-character sparring data.

Stands in for real capture so the whole pipeline is testable: two bodies
orbit and approach each other inside the ring, throw alternating arm
jabs, and alternate stance phases (root frozen, feet exactly planted)
with step phases (root glides to the next trajectory point while the body
lifts slightly so the feet leave the ground-contact band). Facing tracks
the other character with a bounded sinusoidal wobble, so most frames look
at the opponent. Explicitly non-human-quality; deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import matrix_to_quat, yaw_matrix
from .motion import MotionClip
from .skeleton import DEFAULT_ROOT_HEIGHT, Skeleton, default_skeleton


@dataclass
class SynthStyle:
    ring_center: tuple[float, float] = (0.0, 0.0)
    ring_radius: float = 3.0
    fps: float = 30.0
    orbit_speed: float = 0.25  # rad/s around the ring center
    radius_base: float = 1.1  # mean distance from ring center
    radius_sway: float = 0.55  # approach/retreat amplitude
    facing_wobble_deg: float = 47.5  # peak deviation from the opponent direction
    jab_speed: float = 2.2  # rad/s of the jab oscillator
    jab_amp: float = 0.9  # rad, shoulder swing toward the opponent
    stance_frames: int = 24
    step_frames: int = 12
    step_lift: float = 0.045  # body raise during steps, clears the 5 cm band


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _root_tracks(t: np.ndarray, rng: np.random.Generator, style: SynthStyle,
                 phase0: float) -> np.ndarray:
    """Continuous target trajectory on the ground for one character, (T, 2)."""
    center = np.asarray(style.ring_center)
    orbit = phase0 + style.orbit_speed * t + 0.2 * np.sin(0.11 * t + rng.uniform(0, 2 * np.pi))
    radius = style.radius_base + style.radius_sway * np.sin(
        0.31 * t + rng.uniform(0, 2 * np.pi))
    radius = np.clip(radius, 0.3, style.ring_radius - 0.25)
    return center + np.stack([radius * np.cos(orbit), radius * np.sin(orbit)], axis=-1)


def _hold_and_step(target: np.ndarray, style: SynthStyle,
                   start_offset: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quantize a trajectory into stance holds and smooth steps.

    Returns (positions (T,2), lift (T,), step_u (T,)); lift and step_u are
    nonzero mid-step only, step_u ramps 0->1 across each step phase.
    """
    period = style.stance_frames + style.step_frames
    t_total = target.shape[0]
    pos = np.empty_like(target)
    lift = np.zeros(t_total)
    step_u = np.zeros(t_total)
    held = target[0].copy()
    for i in range(t_total):
        k = (i + start_offset) % period
        if k < style.stance_frames:
            pos[i] = held
        else:
            u = (k - style.stance_frames + 1) / style.step_frames
            s = float(_smoothstep(np.array(u)))
            goal = target[min(i + (period - k), t_total - 1)]
            pos[i] = held + s * (goal - held)
            lift[i] = style.step_lift * float(np.sin(np.pi * min(u, 1.0)) ** 2)
            step_u[i] = u
            if k == period - 1:
                held = pos[i].copy()
    return pos, lift, step_u


def synth_duel(seed: int, duration_s: float, style: SynthStyle | None = None,
               skeleton: Skeleton | None = None) -> "InteractionClip":
    """Deterministic synthetic interaction of two characters."""
    from .data import InteractionClip  # local import, data builds on synth for fixtures

    style = style or SynthStyle()
    skeleton = skeleton or default_skeleton()
    rng = np.random.default_rng(seed)
    t_total = max(int(round(duration_s * style.fps)), 2)
    t = np.arange(t_total) / style.fps

    track_a = _root_tracks(t, rng, style, phase0=rng.uniform(0, 2 * np.pi))
    track_b = _root_tracks(t, rng, style, phase0=rng.uniform(0, 2 * np.pi) + np.pi)
    pos_a, lift_a, step_a = _hold_and_step(track_a, style, start_offset=0)
    pos_b, lift_b, step_b = _hold_and_step(track_b, style, start_offset=style.stance_frames // 2)

    # keep the pair separated so the bodies never coincide
    gap = pos_a - pos_b
    dist = np.linalg.norm(gap, axis=-1, keepdims=True)
    too_close = dist < 0.6
    if np.any(too_close):
        push = np.where(dist > 1e-6, gap / np.maximum(dist, 1e-6), np.array([1.0, 0.0]))
        pos_a = np.where(too_close, pos_b + push * 0.6, pos_a)

    center = np.asarray(style.ring_center)
    for p in (pos_a, pos_b):
        r = np.linalg.norm(p - center, axis=-1, keepdims=True)
        over = r > style.ring_radius
        if np.any(over):
            p[...] = np.where(over, center + (p - center) * style.ring_radius / r, p)

    clip_a = _pose_character(pos_a, lift_a, step_a, pos_b, rng, style, skeleton)
    clip_b = _pose_character(pos_b, lift_b, step_b, pos_a, rng, style, skeleton)
    return InteractionClip(clip_a, clip_b, np.asarray(style.ring_center, dtype=np.float64),
                           style.ring_radius)


def _wrap_angle(a: float) -> float:
    return (a + np.pi) % (2 * np.pi) - np.pi


def _pose_character(pos: np.ndarray, lift: np.ndarray, step_u: np.ndarray,
                    opp_pos: np.ndarray, rng: np.random.Generator, style: SynthStyle,
                    skeleton: Skeleton) -> MotionClip:
    t_total = pos.shape[0]
    t = np.arange(t_total) / style.fps
    j = skeleton.joint_count

    wobble = np.deg2rad(style.facing_wobble_deg) * np.sin(
        0.9 * t + rng.uniform(0, 2 * np.pi))
    jab_phase = rng.uniform(0, 2 * np.pi)
    sway = 0.06 * np.sin(1.3 * t + rng.uniform(0, 2 * np.pi))

    root_pos = np.empty((t_total, 3))
    quats = np.empty((t_total, j, 4))
    left_arm = (skeleton.left_shoulder_id, 18, 20, skeleton.left_hand_id)
    right_arm = (skeleton.right_shoulder_id, 19, 21, skeleton.right_hand_id)
    leg_joints = (1, 2, 4, 5, 7, 8, 10, 11)
    held_leg_yaw = None

    for i in range(t_total):
        to_opp = opp_pos[i] - pos[i]
        n = np.linalg.norm(to_opp)
        base = to_opp / n if n > 1e-6 else np.array([0.0, 1.0])
        # yaw angle measured from +z toward +x
        yaw = np.arctan2(base[0], base[1]) + wobble[i]
        body = yaw_matrix(yaw)
        rots = np.broadcast_to(body, (j, 3, 3)).copy()

        # legs pivot only while stepping, so planted feet stay exactly still
        if held_leg_yaw is None:
            held_leg_yaw = yaw
        if step_u[i] > 0:
            s = float(_smoothstep(np.array(step_u[i])))
            leg_yaw = held_leg_yaw + s * _wrap_angle(yaw - held_leg_yaw)
            if step_u[i] >= 1.0:
                held_leg_yaw = leg_yaw
        else:
            leg_yaw = held_leg_yaw
        leg = yaw_matrix(leg_yaw)
        for jt in leg_joints:
            rots[jt] = leg

        torso = body @ yaw_matrix(sway[i])
        for jt in (3, 6, 9, 12, 15):
            rots[jt] = torso

        s = np.sin(style.jab_speed * 2 * np.pi * 0.5 * t[i] + jab_phase)
        jab_l = style.jab_amp * max(0.0, s) ** 2
        jab_r = style.jab_amp * max(0.0, -s) ** 2
        # negative yaw swings the +x (left) arm toward +z, positive the -x arm
        for jt in left_arm:
            rots[jt] = body @ yaw_matrix(-jab_l)
        for jt in right_arm:
            rots[jt] = body @ yaw_matrix(jab_r)

        root_pos[i] = [pos[i, 0], DEFAULT_ROOT_HEIGHT + lift[i], pos[i, 1]]
        quats[i] = matrix_to_quat(rots)

    return MotionClip(skeleton, style.fps, root_pos, quats)
