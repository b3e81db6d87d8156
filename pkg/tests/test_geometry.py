import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparring.geometry import (
    geodesic_angle,
    matrix_to_quat,
    matrix_to_rot6d,
    quat_to_matrix,
    rot6d_to_matrix,
    signed_angle2d,
    yaw_matrix,
)


def random_rotation(rng):
    q = rng.standard_normal(4)
    return quat_to_matrix(q / np.linalg.norm(q))


def test_rot6d_identity():
    v6 = matrix_to_rot6d(np.eye(3))
    np.testing.assert_array_equal(rot6d_to_matrix(v6), np.eye(3))


def test_rot6d_round_trip_random(rng):
    for _ in range(50):
        m = random_rotation(rng)
        m2 = rot6d_to_matrix(matrix_to_rot6d(m))
        np.testing.assert_allclose(m2, m, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6), st.integers(0, 2 ** 31 - 1))
def test_rot6d_gram_schmidt_guarantee(v6, seed):
    """Any non-degenerate 6-vector decodes to an orthonormal det=+1 matrix."""
    v6 = np.asarray(v6)
    a1, a2 = v6[:3], v6[3:]
    if np.linalg.norm(a1) < 1e-3 or np.linalg.norm(np.cross(a1, a2)) < 1e-3:
        return  # degenerate input is out of contract
    m = rot6d_to_matrix(v6)
    np.testing.assert_allclose(m.T @ m, np.eye(3), atol=1e-9)
    assert np.linalg.det(m) == pytest.approx(1.0, abs=1e-9)


def test_quat_round_trip(rng):
    for _ in range(50):
        m = random_rotation(rng)
        np.testing.assert_allclose(quat_to_matrix(matrix_to_quat(m)), m, atol=1e-9)


def test_yaw_matrix_quarter_turn():
    m = yaw_matrix(np.pi / 2)
    np.testing.assert_allclose(m @ np.array([0.0, 0.0, 1.0]), [1.0, 0.0, 0.0], atol=1e-12)


def test_geodesic_angle():
    assert geodesic_angle(np.eye(3), np.eye(3)) == 0.0
    assert geodesic_angle(np.eye(3), yaw_matrix(0.3)) == pytest.approx(0.3, abs=1e-12)


def test_signed_angle_facing_each_other():
    # two characters facing each other: angle between f_a and -f_b is zero
    f_a = np.array([0.0, 1.0])
    f_b = np.array([0.0, -1.0])
    assert signed_angle2d(f_a, -f_b) == 0.0
