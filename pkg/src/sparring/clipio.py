"""Motion clip container format "r2r-clip/1".

One self-describing file holds skeleton metadata, fps, and a frames array
of {root_translation[3], joint_rotations[Jx4 wxyz quaternions]} in world
space. Two encodings share the header schema:

  text   : a single JSON object, extension-agnostic, floats at full repr
  binary : magic "R2RC" + u32 header length + JSON header (adds "dtype",
           "encoding": "binary") + raw little-endian float64 payload of
           root translations then quaternions

Errors carry a stable machine-readable code (ClipError.code).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .motion import MotionClip
from .skeleton import Skeleton

FORMAT_VERSION = "r2r-clip/1"
MAGIC = b"R2RC"

ERR_VERSION = "version-mismatch"
ERR_HEADER = "malformed-header"
ERR_LENGTH = "length-mismatch"
ERR_IO = "io-error"


class ClipError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code


def skeleton_to_dict(sk: Skeleton) -> dict:
    return {
        "joint_count": sk.joint_count,
        "parent_index": list(sk.parent_index),
        "offsets": sk.offsets.tolist(),
        "foot_joint_ids": list(sk.foot_joint_ids),
        "head_joint_id": sk.head_joint_id,
        "left_hand_id": sk.left_hand_id,
        "right_hand_id": sk.right_hand_id,
        "left_shoulder_id": sk.left_shoulder_id,
        "right_shoulder_id": sk.right_shoulder_id,
        "joint_names": list(sk.joint_names),
    }


def _skeleton_from_dict(d: dict) -> Skeleton:
    try:
        sk = Skeleton(
            parent_index=tuple(d["parent_index"]),
            offsets=np.asarray(d["offsets"], dtype=np.float64),
            foot_joint_ids=tuple(d["foot_joint_ids"]),
            head_joint_id=int(d["head_joint_id"]),
            left_hand_id=int(d["left_hand_id"]),
            right_hand_id=int(d["right_hand_id"]),
            left_shoulder_id=int(d.get("left_shoulder_id", 16)),
            right_shoulder_id=int(d.get("right_shoulder_id", 17)),
            joint_names=tuple(d.get("joint_names", ())),
        )
        sk.validate()
    except (KeyError, TypeError, ValueError) as e:
        raise ClipError(ERR_HEADER, f"bad skeleton block: {e}") from e
    return sk


def _header(clip: MotionClip) -> dict:
    return {
        "version": FORMAT_VERSION,
        "skeleton": skeleton_to_dict(clip.skeleton),
        "fps": clip.fps,
        "length": clip.length,
        "meta": clip.meta,
    }


def _check_header(h: dict) -> None:
    if not isinstance(h, dict) or "version" not in h:
        raise ClipError(ERR_HEADER, "missing version field")
    if h["version"] != FORMAT_VERSION:
        raise ClipError(ERR_VERSION, f"expected {FORMAT_VERSION}, got {h['version']!r}")
    for key in ("skeleton", "fps", "length"):
        if key not in h:
            raise ClipError(ERR_HEADER, f"missing {key!r} field")


def save_clip_text(clip: MotionClip, path: str | Path) -> None:
    doc = _header(clip)
    doc["frames"] = [
        {"root_translation": clip.root_pos[i].tolist(),
         "joint_rotations": clip.joint_quat[i].tolist()}
        for i in range(clip.length)
    ]
    Path(path).write_text(json.dumps(doc))


def save_clip_binary(clip: MotionClip, path: str | Path) -> None:
    h = _header(clip)
    h["encoding"] = "binary"
    h["dtype"] = "<f8"
    header = json.dumps(h).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(np.ascontiguousarray(clip.root_pos, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(clip.joint_quat, dtype="<f8").tobytes())


def save_clip(clip: MotionClip, path: str | Path, encoding: str = "binary") -> None:
    if encoding == "binary":
        save_clip_binary(clip, path)
    elif encoding == "text":
        save_clip_text(clip, path)
    else:
        raise ValueError(f"unknown encoding {encoding!r}")


def load_clip(path: str | Path) -> MotionClip:
    """Load either encoding; binary is detected by magic."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ClipError(ERR_IO, str(e)) from e
    if raw[:4] == MAGIC:
        return _load_binary(raw)
    return _load_text(raw)


def _load_text(raw: bytes) -> MotionClip:
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ClipError(ERR_HEADER, f"not valid JSON: {e}") from e
    _check_header(doc)
    sk = _skeleton_from_dict(doc["skeleton"])
    frames = doc.get("frames")
    if not isinstance(frames, list):
        raise ClipError(ERR_HEADER, "missing frames array")
    if len(frames) != doc["length"]:
        raise ClipError(ERR_LENGTH, f"header says {doc['length']} frames, file has {len(frames)}")
    try:
        root = np.array([f["root_translation"] for f in frames], dtype=np.float64)
        quat = np.array([f["joint_rotations"] for f in frames], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as e:
        raise ClipError(ERR_HEADER, f"bad frame entry: {e}") from e
    if quat.shape[1:] != (sk.joint_count, 4) or root.shape[1:] != (3,):
        raise ClipError(ERR_LENGTH, f"frame arrays shaped {root.shape}/{quat.shape} do not match J={sk.joint_count}")
    return MotionClip(sk, float(doc["fps"]), root, quat, doc.get("meta", {}))


def _load_binary(raw: bytes) -> MotionClip:
    if len(raw) < 8:
        raise ClipError(ERR_HEADER, "truncated binary header")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise ClipError(ERR_HEADER, "truncated binary header block")
    try:
        h = json.loads(raw[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ClipError(ERR_HEADER, f"binary header not valid JSON: {e}") from e
    _check_header(h)
    sk = _skeleton_from_dict(h["skeleton"])
    t, j = int(h["length"]), sk.joint_count
    want = (t * 3 + t * j * 4) * 8
    payload = raw[8 + hlen:]
    if len(payload) != want:
        raise ClipError(ERR_LENGTH, f"payload is {len(payload)} bytes, expected {want}")
    root = np.frombuffer(payload[:t * 3 * 8], dtype="<f8").reshape(t, 3).copy()
    quat = np.frombuffer(payload[t * 3 * 8:], dtype="<f8").reshape(t, j, 4).copy()
    return MotionClip(sk, float(h["fps"]), root, quat, h.get("meta", {}))
