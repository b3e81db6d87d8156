import json

import numpy as np
import pytest

from sparring.clipio import (
    ERR_HEADER,
    ERR_LENGTH,
    ERR_VERSION,
    ClipError,
    load_clip,
    save_clip,
    save_clip_binary,
    save_clip_text,
)
from sparring.data import load_interaction
from sparring.synth import synth_duel


@pytest.fixture(scope="module")
def clip():
    return synth_duel(seed=11, duration_s=1.0).clip_a


def test_binary_round_trip_bit_identical(tmp_path, clip):
    p1, p2 = tmp_path / "c1.clip", tmp_path / "c2.clip"
    save_clip_binary(clip, p1)
    loaded = load_clip(p1)
    save_clip_binary(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()
    np.testing.assert_array_equal(loaded.root_pos, clip.root_pos)
    np.testing.assert_array_equal(loaded.joint_quat, clip.joint_quat)


def test_text_binary_equal(tmp_path, clip):
    pt, pb = tmp_path / "c.json", tmp_path / "c.clip"
    save_clip_text(clip, pt)
    save_clip_binary(clip, pb)
    a, b = load_clip(pt), load_clip(pb)
    np.testing.assert_allclose(a.root_pos, b.root_pos, atol=1e-7)
    np.testing.assert_allclose(a.joint_quat, b.joint_quat, atol=1e-7)
    assert a.fps == b.fps


def test_version_mismatch_code(tmp_path, clip):
    p = tmp_path / "c.json"
    save_clip_text(clip, p)
    doc = json.loads(p.read_text())
    doc["version"] = "r2r-clip/99"
    p.write_text(json.dumps(doc))
    with pytest.raises(ClipError) as e:
        load_clip(p)
    assert e.value.code == ERR_VERSION


def test_malformed_header_code(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ClipError) as e:
        load_clip(p)
    assert e.value.code == ERR_HEADER
    p.write_text(json.dumps({"fps": 30}))
    with pytest.raises(ClipError) as e:
        load_clip(p)
    assert e.value.code == ERR_HEADER


def test_length_mismatch_code(tmp_path, clip):
    p = tmp_path / "c.json"
    save_clip_text(clip, p)
    doc = json.loads(p.read_text())
    doc["frames"] = doc["frames"][:-3]
    p.write_text(json.dumps(doc))
    with pytest.raises(ClipError) as e:
        load_clip(p)
    assert e.value.code == ERR_LENGTH


def test_truncated_binary_payload(tmp_path, clip):
    p = tmp_path / "c.clip"
    save_clip_binary(clip, p)
    raw = p.read_bytes()
    p.write_bytes(raw[:-16])
    with pytest.raises(ClipError) as e:
        load_clip(p)
    assert e.value.code == ERR_LENGTH


def test_interaction_length_mismatch(tmp_path):
    inter = synth_duel(seed=12, duration_s=1.0)
    pa, pb = tmp_path / "a.clip", tmp_path / "b.clip"
    save_clip(inter.clip_a, pa)
    save_clip(inter.clip_b.slice(0, inter.clip_b.length - 4), pb)
    with pytest.raises(ClipError) as e:
        load_interaction((pa, pb))
    assert e.value.code == ERR_LENGTH


def test_missing_file_io_code(tmp_path):
    with pytest.raises(ClipError) as e:
        load_clip(tmp_path / "nope.clip")
    assert e.value.code == "io-error"
