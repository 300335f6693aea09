"""Snapshot attitude from two vector observations (Wahba's problem, SVD solution)."""

import math

import numpy as np

from ..errors import DegenerateGeometry
from ..so3 import rotmat_to_quat

_PARALLEL_TOL = 1e-6


def default_weights(cfg):
    """Inverse-trace weights ``1/trace(R_a)``, ``1/trace(R_b)`` (1 for a zero block)."""
    out = []
    for blk in (cfg.R[:3, :3], cfg.R[3:, 3:]):
        tr = float(np.trace(blk))
        out.append(1.0 / tr if tr > 0 else 1.0)
    return tuple(out)


def _angle(u, v):
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    s = np.linalg.norm(np.cross(u, v)) / (nu * nv)
    return math.asin(min(1.0, s))


def attitude_profile(y_a, y_b, cfg, w_a, w_b):
    """``B = sum_i w_i y_i r_i^T`` with body observations and earth references."""
    r_a = -np.asarray(cfg.g_e) / np.linalg.norm(cfg.g_e)
    r_b = np.asarray(cfg.b_e) / np.linalg.norm(cfg.b_e)
    y_a = np.asarray(y_a, dtype=float)
    y_b = np.asarray(y_b, dtype=float)
    u_a = y_a / np.linalg.norm(y_a)
    u_b = y_b / np.linalg.norm(y_b)
    return w_a * np.outer(u_a, r_a) + w_b * np.outer(u_b, r_b)


def wahba_rotation(B):
    """Proper rotation ``A`` maximizing ``trace(A^T B)`` (det-corrected SVD)."""
    U, _, Vt = np.linalg.svd(B)
    d = np.linalg.det(U) * np.linalg.det(Vt)
    return U @ np.diag([1.0, 1.0, d]) @ Vt


def wahba_svd(y_a, y_b, cfg, w_a=None, w_b=None):
    """
    Attitude quaternion from one accelerometer/magnetometer pair.

    Minimizes ``sum_i w_i |u_i - R^T r_i|^2`` over rotations, where ``u_i``
    are the normalized body observations and ``r_i`` the normalized
    references ``-g_e`` and ``b_e``. Weights default to
    :func:`default_weights`.

    Raises
    ------
    DegenerateGeometry
        If either observation is zero, or the two observations (or the two
        references) are parallel within 1e-6 rad.
    """
    if w_a is None or w_b is None:
        da, db = default_weights(cfg)
        w_a = da if w_a is None else w_a
        w_b = db if w_b is None else w_b
    y_a = np.asarray(y_a, dtype=float)
    y_b = np.asarray(y_b, dtype=float)
    if np.linalg.norm(y_a) == 0 or np.linalg.norm(y_b) == 0:
        raise DegenerateGeometry("zero-length observation")
    for u, v, what in ((y_a, y_b, "observations"), (cfg.g_e, cfg.b_e, "references")):
        ang = _angle(u, v)
        if ang < _PARALLEL_TOL:
            raise DegenerateGeometry(f"{what} are parallel within {ang:.2e} rad")
    A = wahba_rotation(attitude_profile(y_a, y_b, cfg, w_a, w_b))
    # A maps references into the body frame, i.e. A = R_q^T
    return rotmat_to_quat(A.T)


def wahba_batch(y_a, y_b, cfg, w_a=None, w_b=None):
    """
    Vectorized :func:`wahba_svd` over rows of ``y_a`` and ``y_b`` (n, 3).

    Returns (n, 4) quaternions with non-negative scalar part. Rows whose
    observations are degenerate raise :class:`DegenerateGeometry`.
    """
    if w_a is None or w_b is None:
        da, db = default_weights(cfg)
        w_a = da if w_a is None else w_a
        w_b = db if w_b is None else w_b
    y_a = np.asarray(y_a, dtype=float)
    y_b = np.asarray(y_b, dtype=float)
    na = np.linalg.norm(y_a, axis=1)
    nb = np.linalg.norm(y_b, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise DegenerateGeometry("zero-length observation")
    u_a = y_a / na[:, None]
    u_b = y_b / nb[:, None]
    sin_ab = np.linalg.norm(np.cross(u_a, u_b), axis=1)
    bad = np.flatnonzero(np.arcsin(np.clip(sin_ab, 0.0, 1.0)) < _PARALLEL_TOL)
    if bad.size:
        raise DegenerateGeometry(f"observations are parallel at row {bad[0]}")
    r_a = -np.asarray(cfg.g_e) / np.linalg.norm(cfg.g_e)
    r_b = np.asarray(cfg.b_e) / np.linalg.norm(cfg.b_e)
    if _angle(r_a, r_b) < _PARALLEL_TOL:
        raise DegenerateGeometry("references are parallel")
    B = w_a * u_a[:, :, None] * r_a[None, None, :] + w_b * u_b[:, :, None] * r_b[None, None, :]
    U, _, Vt = np.linalg.svd(B)
    d = np.linalg.det(U) * np.linalg.det(Vt)
    U[:, :, 2] *= d[:, None]
    A = U @ Vt
    return np.array([rotmat_to_quat(a.T) for a in A])
