"""
Pure-Python implementation of the hot kernels.

Mirrors ``_kernels.pyx`` function for function; used when the compiled
extension is unavailable or ``INVAHRS_BACKEND=python`` is set. Arrays passed
as ``q``, ``b``, ``P``, ``E`` and ``K`` are updated in place and every
function returns an integer status (see ``STATUS_*``).
"""

import math

import numpy as np

STATUS_OK = 0
STATUS_NO_CONVERGENCE = 1
STATUS_SINGULAR = 2
STATUS_NONFINITE = 3

NAME = "python"


def _skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _qmul(p, q):
    return np.array(
        [
            p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3],
            p[0] * q[1] + p[1] * q[0] + p[2] * q[3] - p[3] * q[2],
            p[0] * q[2] - p[1] * q[3] + p[2] * q[0] + p[3] * q[1],
            p[0] * q[3] + p[1] * q[2] - p[2] * q[1] + p[3] * q[0],
        ]
    )


def _rotmat(q):
    a, b, c, d = q
    return np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d],
        ]
    )


def _normalize_into(q, v):
    q[:] = v / math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3])


def _propagate(q, b, wm, dt):
    """Euler step of ``qdot = 1/2 q * (omega_m - b)`` plus renormalization."""
    w = wm - b
    _normalize_into(q, q + 0.5 * dt * _qmul(q, np.r_[0.0, w]))
    return w


def _finite(*arrays):
    return all(np.all(np.isfinite(a)) for a in arrays)


def riccati_gain(P, C, Rd, K):
    """``K = P C^T (C P C^T + Rd)^-1``; returns a status."""
    PCt = P @ C.T
    S = C @ PCt + Rd
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return STATUS_SINGULAR
    # K S = P C^T  <=>  S K^T = C P
    Y = np.linalg.solve(L, PCt.T)
    K[:] = np.linalg.solve(L.T, Y).T
    return STATUS_OK


def riccati_step(Ad, C, Qd, Rd, P, Pn):
    """One a-priori Riccati recursion step ``P -> Pn``; returns a status."""
    K = np.empty((P.shape[0], C.shape[0]))
    st = riccati_gain(P, C, Rd, K)
    if st:
        return st
    Pu = P - K @ (C @ P)
    Pn[:] = Ad @ Pu @ Ad.T + Qd
    Pn[:] = 0.5 * (Pn + Pn.T)
    return STATUS_OK


def dare_fixed_point(Ad, C, Qd, Rd, P, tol, max_iter):
    """
    Iterate the Riccati recursion from ``P`` (updated in place) until the
    Frobenius norm of the update is at most ``tol``.

    Returns ``(status, iterations, residual)``.
    """
    Pn = np.empty_like(P)
    res = math.inf
    for it in range(1, max_iter + 1):
        st = riccati_step(Ad, C, Qd, Rd, P, Pn)
        if st:
            return st, it, res
        res = math.sqrt(float(np.sum((Pn - P) ** 2)))
        P[:] = Pn
        if not math.isfinite(res):
            return STATUS_NONFINITE, it, res
        if res <= tol:
            return STATUS_OK, it, res
    return STATUS_NO_CONVERGENCE, max_iter, res


def riccati_iterate(Ad, C, Qd, Rd, P, steps):
    """
    Run ``steps`` Riccati recursion steps on ``P`` in place.

    Stops early once a step leaves ``P`` bitwise unchanged, since every
    later step would then repeat it. Returns ``(status, steps_run)``.
    """
    Pn = np.empty_like(P)
    for it in range(1, steps + 1):
        st = riccati_step(Ad, C, Qd, Rd, P, Pn)
        if st:
            return st, it
        same = np.array_equal(Pn, P)
        P[:] = Pn
        if not np.all(np.isfinite(P)):
            return STATUS_NONFINITE, it
        if same:
            return STATUS_OK, it
    return STATUS_OK, steps


def ncf_step(q, b, wm, ya, yb, dt, ge, be, kp, ki, k1, k2, E):
    """
    Complementary filter step.

    ``E`` receives the six raw cross products ``(ya_hat x ya, yb_hat x yb)``;
    the weighted error ``k1 e_g + k2 e_b`` drives the correction.
    """
    _propagate(q, b, wm, dt)
    Rt = _rotmat(q).T
    eg = np.cross(-Rt @ ge, ya)
    eb = np.cross(Rt @ be, yb)
    E[:3] = eg
    E[3:] = eb
    e = k1 * eg + k2 * eb
    _normalize_into(q, q - dt * kp * _qmul(q, np.r_[0.0, e]))
    b += dt * ki * e
    return STATUS_OK if _finite(q, b) else STATUS_NONFINITE


def rincf_step(q, b, wm, ya, yb, dt, ge, be, K, p1, p2, keep, E, Keff):
    """
    Constant-gain right-invariant step (RINCF, or RINCF2 when ``p1``/``p2``
    are non-zero). ``Keff`` receives the gain actually applied.
    """
    w = _propagate(q, b, wm, dt)
    R = _rotmat(q)
    Rt = R.T
    E[:3] = R @ np.cross(-Rt @ ge, ya)
    E[3:] = R @ np.cross(Rt @ be, yb)
    Iw = _skew(R @ w)
    Keff[:] = K
    Keff[3:, :3] += p1 * Iw
    Keff[3:, 3:] += p2 * Iw
    Keff *= keep
    v = Keff[:3] @ E
    u = Keff[3:] @ E
    _normalize_into(q, q + _qmul(np.r_[0.0, v], q))
    b += Rt @ u
    return STATUS_OK if _finite(q, b) else STATUS_NONFINITE


_HALF_I = 0.5 * np.eye(3)


def iekf_step(right, q, b, P, wm, ya, yb, dt, ge, be, Q, R6, E, K):
    """
    Invariant EKF step with the cross-product output error.

    ``right`` selects the right-invariant (RIEKF*) or left-invariant
    (LIEKF*) matrices. Predict ``P``, compute the gain, update ``P`` and
    apply the correction.
    """
    w = _propagate(q, b, wm, dt)
    R = _rotmat(q)
    Rt = R.T
    I3 = np.eye(3)
    if right:
        g, m = ge, be
    else:
        g, m = Rt @ ge, Rt @ be
    Sg, Sm = _skew(g), _skew(m)
    A = np.zeros((6, 6))
    A[:3, 3:] = -_HALF_I
    if right:
        A[3:, 3:] = _skew(R @ w)
    else:
        A[:3, :3] = _skew(-w)
    C = np.zeros((6, 6))
    C[:3, :3] = 2.0 * Sg @ Sg
    C[3:, :3] = 2.0 * Sm @ Sm
    M = np.zeros((6, 6))
    M[:3, :3] = _HALF_I
    M[3:, 3:] = -I3
    N = np.zeros((6, 6))
    N[:3, :3] = I3 + Sg
    N[3:, 3:] = I3 - Sm
    Ad = np.eye(6) + A * dt
    P[:] = Ad @ P @ Ad.T + (M @ Q @ M.T) * (dt * dt)
    st = riccati_gain(P, C, N @ R6 @ N.T, K)
    if st:
        return st
    P[:] = P - K @ (C @ P)
    P[:] = 0.5 * (P + P.T)
    eg = np.cross(-Rt @ ge, ya)
    eb = np.cross(Rt @ be, yb)
    if right:
        eg, eb = R @ eg, R @ eb
    E[:3] = eg
    E[3:] = eb
    v = K[:3] @ E
    u = K[3:] @ E
    if right:
        _normalize_into(q, q + _qmul(np.r_[0.0, v], q))
        b += Rt @ u
    else:
        _normalize_into(q, q + _qmul(q, np.r_[0.0, v]))
        b += u
    return STATUS_OK if _finite(q, b, P) else STATUS_NONFINITE
