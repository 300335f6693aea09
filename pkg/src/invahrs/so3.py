"""
Quaternion and rotation algebra.

Quaternions are scalar-first ``(a, b, c, d)`` numpy arrays of shape (4,) and
parameterize the rotation between the earth frame {E} and the body frame
{B}. ``R_q`` is the matrix with ``q * v * q^-1 = R_q v``: it maps body
vectors into the earth frame, so ``R_q^T`` maps earth references into body
measurements.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .errors import GimbalLockWarning, NonFiniteState

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

_GIMBAL_TOL = 1e-6


def quat_mul(q1, q2):
    """Hamilton product ``q1 * q2`` (not renormalized)."""
    a1, b1, c1, d1 = q1
    a2, b2, c2, d2 = q2
    return np.array(
        [
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ]
    )


def quat_inv(q):
    """Inverse of a unit quaternion, i.e. its conjugate."""
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])


def vec_quat(v):
    """Augment a 3-vector to the pure quaternion ``(0, v)``."""
    return np.array([0.0, v[0], v[1], v[2]])


def quat_to_rotmat(q):
    """Rotation matrix ``R_q`` with ``q * v * q^-1 = R_q v``."""
    a, b, c, d = q
    return np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d],
        ]
    )


def rotmat_to_quat(R):
    """
    Unit quaternion of a rotation matrix (Shepperd's method).

    The returned quaternion has a non-negative scalar part.
    """
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    diag = (R[0, 0], R[1, 1], R[2, 2])
    k = int(np.argmax((tr, *diag)))
    if k == 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif k == 1:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif k == 2:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = quat_normalize(q)
    return q if q[0] >= 0.0 else -q


def quat_rotate(q, v):
    """Rotate ``v`` by ``q`` through the quaternion sandwich ``q * (0, v) * q^-1``."""
    return quat_mul(quat_mul(q, vec_quat(v)), quat_inv(q))[1:]


def quat_integrate(q, qdot, dt):
    """One explicit Euler step ``q + qdot dt`` followed by renormalization."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    out = np.asarray(q, dtype=float) + np.asarray(qdot, dtype=float) * dt
    if not np.all(np.isfinite(out)):
        raise NonFiniteState("non-finite quaternion after integration step")
    n = math.sqrt(float(out @ out))
    if n == 0.0 or not math.isfinite(n):
        raise NonFiniteState("quaternion collapsed to zero norm")
    return out / n


def quat_exp(rotvec):
    """Unit quaternion of a rotation vector (axis * angle)."""
    rotvec = np.asarray(rotvec, dtype=float)
    theta = math.sqrt(float(rotvec @ rotvec))
    if theta < 1e-12:
        return quat_normalize(np.r_[1.0, 0.5 * rotvec])
    return np.r_[math.cos(0.5 * theta), math.sin(0.5 * theta) * rotvec / theta]


def skew(v):
    """Matrix ``[v]x`` with ``[v]x w = v x w``."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def euler_from_quat(q):
    """
    Intrinsic Z-Y-X (yaw, pitch, roll) angles of ``q``.

    Returns
    -------
    roll, pitch, yaw : float
        Radians; pitch in [-pi/2, pi/2].

    Notes
    -----
    Within 1e-6 rad of pitch = +-90 deg only ``yaw - roll`` (or ``yaw + roll``)
    is defined. Roll is then fixed to 0 and a :class:`GimbalLockWarning` is
    emitted.
    """
    a, b, c, d = q
    sp = 2.0 * (a * c - d * b)
    sp = min(1.0, max(-1.0, sp))
    pitch = math.asin(sp)
    if abs(abs(pitch) - 0.5 * math.pi) < _GIMBAL_TOL:
        warnings.warn("gimbal lock in Euler extraction; roll set to 0", GimbalLockWarning, stacklevel=2)
        r01 = 2 * (b * c - a * d)
        r11 = a * a - b * b + c * c - d * d
        return 0.0, math.copysign(0.5 * math.pi, sp), math.atan2(-r01, r11)
    roll = math.atan2(2.0 * (a * b + c * d), 1.0 - 2.0 * (b * b + c * c))
    yaw = math.atan2(2.0 * (a * d + b * c), 1.0 - 2.0 * (c * c + d * d))
    return roll, pitch, yaw


def quat_from_euler(roll, pitch, yaw):
    """Inverse of :func:`euler_from_quat`: ``q = qz(yaw) * qy(pitch) * qx(roll)``."""
    cr, sr = math.cos(0.5 * roll), math.sin(0.5 * roll)
    cp, sp = math.cos(0.5 * pitch), math.sin(0.5 * pitch)
    cy, sy = math.cos(0.5 * yaw), math.sin(0.5 * yaw)
    return np.array(
        [
            cy * cp * cr + sy * sp * sr,
            cy * cp * sr - sy * sp * cr,
            cy * sp * cr + sy * cp * sr,
            sy * cp * cr - cy * sp * sr,
        ]
    )


def random_quat(rng):
    """Uniformly distributed unit quaternion."""
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)
