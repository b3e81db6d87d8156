"""Rotation representations and ground-plane frame math.

Conventions used throughout the package:
  - y is up; the ground plane is spanned by x and z.
  - 2-D horizontal vectors are (x, z) pairs; a character at identity faces +z,
    which is the 2-D direction (0, 1).
  - 6-D rotations are the first two columns of the rotation matrix; decoding
    runs Gram-Schmidt, so any non-degenerate 6-vector yields det=+1.
  - Quaternions are unit, (w, x, y, z) ordered.

Everything here is pure numpy over immutable inputs.
"""

from __future__ import annotations

import numpy as np

UP = np.array([0.0, 1.0, 0.0])
EPS = 1e-8


def unit(v: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Normalize the last axis; raises on (near-)zero input."""
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n < eps):
        raise ValueError(f"cannot normalize vector with norm < {eps}")
    return v / n


def rot6d_to_matrix(v6: np.ndarray) -> np.ndarray:
    """Decode 6-D rotations (..., 6) to matrices (..., 3, 3) via Gram-Schmidt."""
    v6 = np.asarray(v6, dtype=np.float64)
    a1, a2 = v6[..., :3], v6[..., 3:]
    b1 = unit(a1)
    b2 = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    b2 = unit(b2)
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)  # columns


def matrix_to_rot6d(m: np.ndarray) -> np.ndarray:
    """First two columns of (..., 3, 3) rotation matrices, flattened to (..., 6)."""
    m = np.asarray(m, dtype=np.float64)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternions (..., 4) wxyz to rotation matrices (..., 3, 3)."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrices (..., 3, 3) to unit quaternions (..., 4) wxyz."""
    m = np.asarray(m, dtype=np.float64)
    batch = m.shape[:-2]
    m = m.reshape(-1, 3, 3)
    q = np.empty((m.shape[0], 4), dtype=np.float64)
    t = np.trace(m, axis1=-2, axis2=-1)
    for i in range(m.shape[0]):
        r = m[i]
        if t[i] > 0:
            s = np.sqrt(t[i] + 1.0) * 2
            q[i] = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
            s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2
            q[i] = [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        elif r[1, 1] > r[2, 2]:
            s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2
            q[i] = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
        else:
            s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2
            q[i] = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return q.reshape(batch + (4,))


def yaw_matrix(angle: float) -> np.ndarray:
    """Rotation about the vertical axis; positive angle turns +z toward +x."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def perp2d(f: np.ndarray) -> np.ndarray:
    """Right-hand side axis of a 2-D facing: facing (0,1) maps to side (1,0)."""
    return np.array([f[1], -f[0]])


def to_local_dir2d(facing: np.ndarray, v: np.ndarray) -> np.ndarray:
    s = perp2d(facing)
    return np.stack([v @ s, v @ facing], axis=-1)


def to_world_dir2d(facing: np.ndarray, local: np.ndarray) -> np.ndarray:
    s = perp2d(facing)
    return np.asarray(local)[..., 0:1] * s + np.asarray(local)[..., 1:2] * facing


def frame_matrix3d(facing: np.ndarray) -> np.ndarray:
    """World-from-local 3x3 for a ground frame: columns (side, up, facing)."""
    side = np.array([facing[1], 0.0, -facing[0]])
    fwd = np.array([facing[0], 0.0, facing[1]])
    return np.stack([side, UP, fwd], axis=-1)


def angle_between2d(a: np.ndarray, b: np.ndarray) -> float:
    """Unsigned angle in radians between two 2-D vectors."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < EPS or nb < EPS:
        return 0.0
    c = float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))
    return float(np.arccos(c))


def signed_angle2d(a: np.ndarray, b: np.ndarray) -> float:
    """Signed angle in radians from a to b (positive = toward perp side)."""
    ang = angle_between2d(a, b)
    cross = a[0] * b[1] - a[1] * b[0]
    return -ang if cross > 0 else ang


def geodesic_angle(r1: np.ndarray, r2: np.ndarray) -> float:
    """Angle in radians between two rotation matrices."""
    tr = np.trace(r1.T @ r2)
    return float(np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0)))
