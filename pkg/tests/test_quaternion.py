import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from goalforge import quaternion as quat
from goalforge.errors import ContractError

raw4 = arrays(np.float64, 4, elements=st.floats(-1.0, 1.0)).filter(
    lambda v: np.linalg.norm(v) > 1e-3)
angles = st.floats(-np.pi, np.pi)


def angle_from_trace(q1, q2):
    """Independent oracle: rotation angle from the trace of R1^T R2."""
    r = quat.to_matrix(q1).T @ quat.to_matrix(q2)
    return float(np.arccos(np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)))


def test_multiply_matches_matrix_product(rng):
    a, b = quat.random_uniform(rng, 2)
    assert np.allclose(quat.to_matrix(quat.multiply(a, b)),
                       quat.to_matrix(a) @ quat.to_matrix(b), atol=1e-12)


def test_non_unit_rejected():
    with pytest.raises(ContractError):
        quat.distance(np.array([1.0, 0.1, 0.0, 0.0]), quat.IDENTITY)


class TestDistance:
    def test_self(self, rng):
        q = quat.random_uniform(rng)
        assert quat.distance(q, q) == 0.0

    def test_double_cover(self, rng):
        q = quat.random_uniform(rng)
        assert quat.distance(q, -q) == 0.0

    def test_z_rotation(self):
        assert quat.distance(quat.IDENTITY, quat.rot_z(0.2)) == pytest.approx(0.2, abs=1e-12)
        assert angle_from_trace(quat.IDENTITY, quat.rot_z(0.2)) == pytest.approx(0.2, abs=1e-9)

    def test_agrees_with_arccos_form(self, rng):
        q1, q2 = quat.random_uniform(rng, 2)
        expected = 2.0 * np.arccos(min(1.0, abs(np.dot(q1, q2))))
        assert quat.distance(q1, q2) == pytest.approx(expected, abs=1e-9)

    @given(raw4, raw4)
    def test_matches_trace_oracle(self, a, b):
        q1, q2 = quat.normalize(a), quat.normalize(b)
        assert quat.distance(q1, q2) == pytest.approx(angle_from_trace(q1, q2), abs=1e-6)

    @given(raw4, raw4)
    def test_symmetric_and_bounded(self, a, b):
        q1, q2 = quat.normalize(a), quat.normalize(b)
        d = quat.distance(q1, q2)
        assert d == pytest.approx(quat.distance(q2, q1), abs=1e-12)
        assert 0.0 <= d <= np.pi + 1e-12

    def test_triangle_inequality_batch(self, rng):
        a, b, c = (quat.random_uniform(rng, 10_000) for _ in range(3))
        assert np.all(quat.distance(a, c) <= quat.distance(a, b) + quat.distance(b, c) + 1e-12)


class TestDistanceIgnoreZ:
    @given(raw4, angles)
    def test_invariant_under_body_z_rotation(self, a, theta):
        q1 = quat.normalize(a)
        q2 = quat.multiply(q1, quat.rot_z(theta))
        assert quat.distance_ignore_z(q1, q2) <= 1e-9

    def test_tilt_about_x(self):
        assert quat.distance_ignore_z(quat.IDENTITY, quat.rot_x(0.3)) == pytest.approx(0.3, abs=1e-12)

    @given(raw4, raw4)
    def test_symmetric(self, a, b):
        q1, q2 = quat.normalize(a), quat.normalize(b)
        assert quat.distance_ignore_z(q1, q2) == pytest.approx(
            quat.distance_ignore_z(q2, q1), abs=1e-12)

    @given(raw4, raw4)
    def test_never_exceeds_full_distance(self, a, b):
        q1, q2 = quat.normalize(a), quat.normalize(b)
        assert quat.distance_ignore_z(q1, q2) <= quat.distance(q1, q2) + 1e-9


def test_uniform_sampling_moment(rng):
    q = quat.random_uniform(rng, 100_000)
    fixed = quat.normalize(np.array([0.3, -0.2, 0.5, 0.1]))
    assert np.mean((q @ fixed) ** 2) == pytest.approx(0.25, abs=0.01)


def test_exp_map_axis_angle():
    assert np.allclose(quat.exp_map([0.0, 0.0, 0.04]), quat.rot_z(0.04), atol=1e-15)
    assert np.array_equal(quat.exp_map([0.0, 0.0, 0.0]), quat.IDENTITY)
