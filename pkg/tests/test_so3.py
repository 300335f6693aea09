import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from invahrs.errors import GimbalLockWarning, NonFiniteState
from invahrs.so3 import (
    IDENTITY,
    euler_from_quat,
    quat_exp,
    quat_from_euler,
    quat_integrate,
    quat_inv,
    quat_mul,
    quat_normalize,
    quat_rotate,
    quat_to_rotmat,
    rotmat_to_quat,
    skew,
    vec_quat,
)

from .conftest import random_unit

finite = st.floats(-1e3, 1e3, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)
quats = st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 4).filter(lambda v: np.linalg.norm(v) > 1e-3).map(quat_normalize)


def scipy_rot(q):
    """scipy uses scalar-last quaternions."""
    return Rotation.from_quat(np.r_[q[1:], q[0]])


@pytest.mark.parametrize(
    "q1, q2, expected",
    [
        ((1, 0, 0, 0), (0.5, 0.5, 0.5, 0.5), (0.5, 0.5, 0.5, 0.5)),
        ((0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1)),  # i j = k
        ((0, 0, 1, 0), (0, 0, 0, 1), (0, 1, 0, 0)),  # j k = i
        ((0, 0, 0, 1), (0, 1, 0, 0), (0, 0, 1, 0)),  # k i = j
        ((0, 0, 1, 0), (0, 1, 0, 0), (0, 0, 0, -1)),  # j i = -k
        ((0, 1, 0, 0), (0, 1, 0, 0), (-1, 0, 0, 0)),
    ],
)
def test_quat_mul_basis(q1, q2, expected):
    np.testing.assert_array_equal(quat_mul(np.array(q1, float), np.array(q2, float)), expected)


def test_quat_mul_matches_scipy_composition(rng):
    for q1, q2 in zip(random_unit(rng, 50), random_unit(rng, 50)):
        ref = (scipy_rot(q1) * scipy_rot(q2)).as_matrix()
        np.testing.assert_allclose(quat_to_rotmat(quat_mul(q1, q2)), ref, atol=1e-12)


def test_quat_mul_not_renormalized():
    q = np.array([2.0, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(quat_mul(q, q), [4.0, 0.0, 0.0, 0.0])


@given(quats, quats, quats)
def test_associativity_and_closure(a, b, c):
    np.testing.assert_allclose(quat_mul(quat_mul(a, b), c), quat_mul(a, quat_mul(b, c)), atol=1e-12)
    assert abs(np.linalg.norm(quat_mul(a, b)) - 1.0) < 1e-12


@pytest.mark.parametrize(
    "q, expected",
    [((1, 0, 0, 0), (1, 0, 0, 0)), ((0, 1, 0, 0), (0, -1, 0, 0)), ((0.5, 0.5, -0.5, 0.5), (0.5, -0.5, 0.5, -0.5))],
)
def test_quat_inv_is_conjugate(q, expected):
    np.testing.assert_array_equal(quat_inv(np.array(q, float)), expected)


def test_inverse_property(rng):
    for q in random_unit(rng, 100):
        np.testing.assert_allclose(quat_mul(quat_inv(q), q), IDENTITY, atol=1e-12)
        np.testing.assert_allclose(quat_mul(q, quat_inv(q)), IDENTITY, atol=1e-12)


def test_rotmat_identity_and_quarter_turn():
    np.testing.assert_array_equal(quat_to_rotmat(IDENTITY), np.eye(3))
    s = math.sqrt(0.5)
    np.testing.assert_allclose(quat_to_rotmat([s, 0, 0, s]) @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_rotmat_matches_scipy(rng):
    for q in random_unit(rng, 100):
        R = quat_to_rotmat(q)
        np.testing.assert_allclose(R, scipy_rot(q).as_matrix(), atol=1e-12)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)


@given(quats, quats)
def test_rotmat_homomorphism(q1, q2):
    np.testing.assert_allclose(
        quat_to_rotmat(quat_mul(q1, q2)), quat_to_rotmat(q1) @ quat_to_rotmat(q2), atol=1e-9
    )


@given(quats, vec3)
def test_rotate_consistent_with_rotmat(q, v):
    r = quat_rotate(q, v)
    np.testing.assert_allclose(r, quat_to_rotmat(q) @ v, atol=1e-12 * max(1.0, np.linalg.norm(v)))
    assert np.linalg.norm(r) == pytest.approx(np.linalg.norm(v), rel=1e-12, abs=1e-12)


def test_rotate_identity():
    v = np.array([0.3, -2.0, 5.0])
    np.testing.assert_array_equal(quat_rotate(IDENTITY, v), v)


def test_rotmat_to_quat_roundtrip(rng):
    for q in random_unit(rng, 200):
        p = rotmat_to_quat(quat_to_rotmat(q))
        assert p[0] >= 0
        np.testing.assert_allclose(p, q * np.sign(q[0]), atol=1e-12)
    # the four branches of Shepperd's method
    for q in ([1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]):
        np.testing.assert_allclose(np.abs(rotmat_to_quat(quat_to_rotmat(np.array(q, float)))), q, atol=1e-15)


def test_integrate_zero_rate():
    q = quat_normalize([0.9, 0.1, -0.2, 0.3])
    np.testing.assert_allclose(quat_integrate(q, np.zeros(4), 0.01), q, atol=1e-15)


def test_integrate_constant_yaw_rate():
    # each renormalized Euler step turns by exactly 2 atan(w dt / 2), which
    # is w dt up to O(dt^3) per step
    wz, dt, n = 0.7, 1e-3, 2000
    q = IDENTITY.copy()
    for _ in range(n):
        q = quat_integrate(q, 0.5 * quat_mul(q, vec_quat([0, 0, wz])), dt)
        assert abs(np.linalg.norm(q) - 1.0) < 1e-15
    _, _, yaw = euler_from_quat(q)
    assert yaw == pytest.approx(2 * n * math.atan(0.5 * wz * dt), abs=1e-12)
    assert abs(yaw - wz * n * dt) < wz * dt


@pytest.mark.parametrize("dt", [0.0, -1e-3])
def test_integrate_requires_positive_dt(dt):
    with pytest.raises(ValueError):
        quat_integrate(IDENTITY, np.zeros(4), dt)


def test_integrate_non_finite():
    with pytest.raises(NonFiniteState):
        quat_integrate(IDENTITY, np.array([np.nan, 0, 0, 0]), 0.01)
    with pytest.raises(NonFiniteState):
        quat_integrate(IDENTITY, np.array([-100.0, 0, 0, 0]), 0.01)


def test_skew():
    np.testing.assert_array_equal(skew(np.zeros(3)), np.zeros((3, 3)))
    np.testing.assert_array_equal(skew([0, 0, 1]) @ [1, 0, 0], [0, 1, 0])


@given(vec3, vec3)
def test_skew_is_cross_product(v, w):
    S = skew(v)
    np.testing.assert_array_equal(S.T, -S)
    np.testing.assert_allclose(S @ w, np.cross(v, w), atol=1e-9)


def test_euler_examples():
    assert euler_from_quat(IDENTITY) == (0.0, 0.0, 0.0)
    q = np.array([math.cos(math.pi / 12), 0, 0, math.sin(math.pi / 12)])
    np.testing.assert_allclose(euler_from_quat(q), (0, 0, math.pi / 6), atol=1e-15)


def test_euler_matches_scipy_zyx(rng):
    for q in random_unit(rng, 100):
        yaw, pitch, roll = scipy_rot(q).as_euler("ZYX")
        np.testing.assert_allclose(euler_from_quat(q), (roll, pitch, yaw), atol=1e-12)


def test_euler_roundtrip_1000(rng):
    ang = np.column_stack(
        [rng.uniform(-math.pi, math.pi, 1000), rng.uniform(-1.5, 1.5, 1000), rng.uniform(-math.pi, math.pi, 1000)]
    )
    for r, p, y in ang:
        np.testing.assert_allclose(euler_from_quat(quat_from_euler(r, p, y)), (r, p, y), atol=1e-9)


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_gimbal_lock_warning(sign):
    q = quat_from_euler(0.3, sign * math.pi / 2, 0.5)
    with pytest.warns(GimbalLockWarning):
        roll, pitch, yaw = euler_from_quat(q)
    assert roll == 0.0
    assert pitch == pytest.approx(sign * math.pi / 2)
    # the rotation is preserved by the roll := 0 split
    np.testing.assert_allclose(quat_to_rotmat(quat_from_euler(roll, pitch, yaw)), quat_to_rotmat(q), atol=1e-7)


def test_no_warning_away_from_singularity():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        euler_from_quat(quat_from_euler(0.1, 1.5, 0.2))


def test_quat_exp():
    np.testing.assert_allclose(quat_exp([0, 0, math.pi]), [0, 0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(quat_exp(np.zeros(3)), IDENTITY)
    v = np.array([0.1, -0.3, 0.2])
    np.testing.assert_allclose(quat_to_rotmat(quat_exp(v)), Rotation.from_rotvec(v).as_matrix(), atol=1e-14)
