"""
Additive-error extended Kalman filter on the raw quaternion and bias states.

A deliberately plain baseline: seven states ``(q, omega_b)``, additive
linearization of the quaternion kinematics and of the measurement maps
``-R^T g_e`` and ``R^T b_e``, and renormalization of ``q`` as the only
treatment of the unit-norm constraint.
"""

import numpy as np

from ..errors import NonFiniteState, SingularInnovation
from ..so3 import quat_to_rotmat

_I3 = np.eye(3)


def omega_matrix(w):
    """``Omega(w)`` with ``q * (0, w) = Omega(w) q``."""
    x, y, z = w
    return np.array(
        [
            [0.0, -x, -y, -z],
            [x, 0.0, z, -y],
            [y, -z, 0.0, x],
            [z, y, -x, 0.0],
        ]
    )


def xi_matrix(q):
    """``Xi(q)`` (4x3) with ``q * (0, v) = Xi(q) v``."""
    a, b, c, d = q
    return np.array(
        [
            [-b, -c, -d],
            [a, -d, c],
            [d, a, -b],
            [-c, b, a],
        ]
    )


def rotate_transpose_jacobian(q, v):
    """
    Jacobian of ``R_q^T v`` with respect to the (unnormalized) quaternion.

    From ``R_q^T v = (a^2 - |u|^2) v + 2 u (u.v) - 2 a (u x v)`` for
    ``q = (a, u)``:

    * d/da = 2 a v - 2 u x v
    * d/du = -2 v u^T + 2 (u.v) I + 2 u v^T + 2 a [v]x
    """
    a, x, y, z = (float(c) for c in q)
    v1, v2, v3 = (float(c) for c in v)
    uv = x * v1 + y * v2 + z * v3
    c1, c2, c3 = y * v3 - z * v2, z * v1 - x * v3, x * v2 - y * v1
    return 2.0 * np.array(
        [
            [a * v1 - c1, uv, x * v2 - v1 * y - a * v3, x * v3 - v1 * z + a * v2],
            [a * v2 - c2, y * v1 - v2 * x + a * v3, uv, y * v3 - v2 * z - a * v1],
            [a * v3 - c3, z * v1 - v3 * x - a * v2, z * v2 - v3 * y + a * v1, uv],
        ]
    )


def measurement_model(q, cfg):
    """Predicted outputs ``h(q) = (-R^T g_e, R^T b_e)`` and their 6x7 Jacobian."""
    Rt = quat_to_rotmat(q).T
    h = np.concatenate((-(Rt @ cfg.g_e), Rt @ cfg.b_e))
    H = np.zeros((6, 7))
    H[:3, :4] = -rotate_transpose_jacobian(q, cfg.g_e)
    H[3:, :4] = rotate_transpose_jacobian(q, cfg.b_e)
    return h, H


def ekf_step(q, b, P, omega_m, y_a, y_b, cfg, dt):
    """
    One predict/update cycle. Returns the new ``(q, b, P, innovation, K)``.

    ``P`` is the 7x7 covariance of ``(q, omega_b)``. Overflow shows up as
    :class:`~invahrs.errors.NonFiniteState` rather than numpy warnings.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _ekf_step(q, b, P, omega_m, y_a, y_b, cfg, dt)


def _ekf_step(q, b, P, omega_m, y_a, y_b, cfg, dt):
    w = omega_m - b
    Xi = xi_matrix(q)
    F = np.eye(7)
    F[:4, :4] += 0.5 * dt * omega_matrix(w)
    F[:4, 4:] = -0.5 * dt * Xi
    G = np.zeros((7, 6))
    G[:4, :3] = 0.5 * Xi
    G[4:, 3:] = _I3
    q = q + 0.5 * dt * (Xi @ w)
    q = q / np.linalg.norm(q)
    P = F @ P @ F.T + G @ cfg.Q @ G.T * dt**2

    h, H = measurement_model(q, cfg)
    S = H @ P @ H.T + cfg.R
    try:
        K = np.linalg.solve(S, H @ P).T
    except np.linalg.LinAlgError:
        raise SingularInnovation("EKF innovation covariance is singular") from None
    nu = np.concatenate((y_a, y_b)) - h
    dx = K @ nu
    q = q + dx[:4]
    b = b + dx[4:]
    P = P - K @ H @ P
    P = 0.5 * (P + P.T)
    n = np.linalg.norm(q)
    if not (np.isfinite(n) and n > 0 and np.all(np.isfinite(b)) and np.all(np.isfinite(P))):
        raise NonFiniteState("EKF state became non-finite")
    return q / n, b, P, nu, K
