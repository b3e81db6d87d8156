"""Wire protocol "r2r-stream/1" for the streaming service.

Messages are length-prefixed JSON objects carried as websocket text
frames: "<decimal byte length>:<json>". Every object has "v" (protocol
version) and "kind". Kinds:

  hello     server->client  {skeleton, d, fps, w}
  frames    server->client  {start_frame, poses: [{a: pose, b: pose}, ...]}
  error     server->client  {code, detail}
  signal    client->server  {frame, signal: {head_pos, head_rot6d, lhand_pos,
                             lhand_rot6d, rhand_pos, rhand_rot6d}, t?}
  reset     client->server  {}
  heartbeat both            {nonce, t, t_server?}

where pose = {root_translation: [3], joint_rotations: [J][4]}.
"""

from __future__ import annotations

import json

import numpy as np

from .motion import SparseSignal

STREAM_VERSION = "r2r-stream/1"

ERR_MALFORMED = "malformed-message"
ERR_VERSION = "version-mismatch"
ERR_SCHEMA = "schema-violation"
ERR_INTERNAL = "internal-error"

_CLIENT_KINDS = {"signal", "reset", "heartbeat"}
_SERVER_KINDS = {"hello", "frames", "error", "heartbeat"}

_SIGNAL_FIELDS = {
    "head_pos": 3, "head_rot6d": 6, "lhand_pos": 3, "lhand_rot6d": 6,
    "rhand_pos": 3, "rhand_rot6d": 6,
}


class ProtocolError(Exception):
    def __init__(self, code: str, detail: str):
        super().__init__(f"[{code}] {detail}")
        self.code = code
        self.detail = detail


def encode_message(obj: dict) -> str:
    payload = json.dumps(obj, separators=(",", ":"))
    return f"{len(payload.encode('utf-8'))}:{payload}"


def decode_message(raw: str | bytes) -> dict:
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8", errors="replace")
    head, sep, payload = raw.partition(":")
    if not sep:
        raise ProtocolError(ERR_MALFORMED, "missing length prefix")
    try:
        length = int(head)
    except ValueError:
        raise ProtocolError(ERR_MALFORMED, f"bad length prefix {head!r}") from None
    if len(payload.encode("utf-8")) != length:
        raise ProtocolError(ERR_MALFORMED, "length prefix does not match payload")
    try:
        obj = json.loads(payload)
    except json.JSONDecodeError as e:
        raise ProtocolError(ERR_MALFORMED, f"payload is not valid JSON: {e}") from None
    if not isinstance(obj, dict):
        raise ProtocolError(ERR_MALFORMED, "payload must be a JSON object")
    return obj


def _require(obj: dict, key: str, kind: str):
    if key not in obj:
        raise ProtocolError(ERR_SCHEMA, f"{kind} message missing {key!r}")
    return obj[key]


def validate_message(obj: dict, direction: str = "client") -> dict:
    """Check version, kind and per-kind required fields; returns the object."""
    if obj.get("v") != STREAM_VERSION:
        raise ProtocolError(ERR_VERSION, f"expected v={STREAM_VERSION!r}, got {obj.get('v')!r}")
    kind = obj.get("kind")
    allowed = _CLIENT_KINDS if direction == "client" else _SERVER_KINDS
    if kind not in allowed:
        raise ProtocolError(ERR_SCHEMA, f"unknown {direction} message kind {kind!r}")
    if kind == "signal":
        frame = _require(obj, "frame", kind)
        if not isinstance(frame, int) or frame < 0:
            raise ProtocolError(ERR_SCHEMA, "signal frame must be a non-negative integer")
        sig = _require(obj, "signal", kind)
        for name, n in _SIGNAL_FIELDS.items():
            v = _require(sig, name, "signal")
            if not isinstance(v, list) or len(v) != n or \
                    not all(isinstance(x, (int, float)) for x in v):
                raise ProtocolError(ERR_SCHEMA, f"signal field {name} must be a list of {n} numbers")
    elif kind == "hello":
        for key in ("skeleton", "d", "fps", "w"):
            _require(obj, key, kind)
    elif kind == "frames":
        start = _require(obj, "start_frame", kind)
        poses = _require(obj, "poses", kind)
        if not isinstance(start, int) or not isinstance(poses, list):
            raise ProtocolError(ERR_SCHEMA, "frames needs int start_frame and a poses list")
    elif kind == "error":
        _require(obj, "code", kind)
        _require(obj, "detail", kind)
    elif kind == "heartbeat":
        _require(obj, "nonce", kind)
    return obj


def signal_message(frame: int, signal: SparseSignal, t: float | None = None) -> dict:
    msg = {
        "v": STREAM_VERSION, "kind": "signal", "frame": frame,
        "signal": {
            "head_pos": list(map(float, signal.head_pos)),
            "head_rot6d": list(map(float, signal.head_rot6d)),
            "lhand_pos": list(map(float, signal.lhand_pos)),
            "lhand_rot6d": list(map(float, signal.lhand_rot6d)),
            "rhand_pos": list(map(float, signal.rhand_pos)),
            "rhand_rot6d": list(map(float, signal.rhand_rot6d)),
        },
    }
    if t is not None:
        msg["t"] = t
    return msg


def parse_signal(obj: dict) -> tuple[int, SparseSignal]:
    sig = obj["signal"]
    return int(obj["frame"]), SparseSignal(
        head_pos=np.asarray(sig["head_pos"], dtype=np.float64),
        head_rot6d=np.asarray(sig["head_rot6d"], dtype=np.float64),
        lhand_pos=np.asarray(sig["lhand_pos"], dtype=np.float64),
        lhand_rot6d=np.asarray(sig["lhand_rot6d"], dtype=np.float64),
        rhand_pos=np.asarray(sig["rhand_pos"], dtype=np.float64),
        rhand_rot6d=np.asarray(sig["rhand_rot6d"], dtype=np.float64),
    )


def error_message(code: str, detail: str) -> dict:
    return {"v": STREAM_VERSION, "kind": "error", "code": code, "detail": detail}


def frames_message(start_frame: int, poses_a, poses_b) -> dict:
    """poses_*: lists of WorldPose-like (root_pos (3,), joint quats (J,4))."""
    entries = []
    for pa, pb in zip(poses_a, poses_b):
        entries.append({"a": pa, "b": pb})
    return {"v": STREAM_VERSION, "kind": "frames", "start_frame": start_frame,
            "poses": entries}
