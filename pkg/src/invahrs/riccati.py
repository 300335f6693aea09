"""
Steady-state gain synthesis for the right-invariant complementary filter.

The linearized right-invariant error model is discretized as

    A_d = I + A dt,   Q_d = M Q M^T dt^2,   R_d = N R N^T

and the discrete algebraic Riccati equation (DARE) is solved by plain
fixed-point iteration of the a-priori Riccati recursion

    P+ = A_d (P - P C^T (C P C^T + R_d)^-1 C P) A_d^T + Q_d

from ``P0 = I``. The constant gain is ``K = P C^T (C P C^T + R_d)^-1``.

Sign convention
---------------
``K`` is applied to the output error ``E = R_q (y_hat x y)`` as

    q <- q + (K[:3] E) * q,     omega_b <- omega_b + R_q^T (K[3:] E)

With aligned references the solved gain has the block pattern

    K = [[-I_a, -I_b],
         [ I_c,  I_d]]

with positive diagonal ``I_a .. I_d``; :func:`extract_structured_gains`
returns those positive parameters.

Indices in masks are 1-based ``(row, col)`` pairs, everything else is
0-based numpy indexing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import (
    ConfigError,
    IndexOutOfRange,
    InvalidGains,
    NoConvergence,
    NonFiniteState,
    SingularInnovation,
    SingularN,
)
from .models import NoiseConfig
from .so3 import skew

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 200_000

#: Smallest accepted eigenvalue of N R N^T relative to the largest.
_PD_RTOL = 1e-12

#: Entries below this magnitude are treated as zero when forming p1/p2.
P_ENTRY_TOL = 1e-12

#: 1-based (row, col) entries zeroed so the magnetometer corrects yaw only:
#: compass columns feeding roll/pitch and the x/y bias rows, and the unused
#: accelerometer-z couplings.
SELECTIVE_MASK = frozenset({(1, 4), (2, 5), (3, 3), (4, 4), (5, 5), (6, 3)})

#: Published structured gains (x 1e-3) for Q = 0.1 I6, R = diag(0.3 I3, 0.5 I3).
REFERENCE_GAINS = {
    "a1": 0.3326,
    "a2": 0.2517,
    "b2": 0.1511,
    "b3": 0.2630,
    "c1": 0.5666,
    "c2": 0.4412,
    "d2": 0.2648,
    "d3": 0.4332,
}


@dataclass(frozen=True)
class DiscreteSystem:
    """Discretized linear system handed to the DARE solver."""

    A_d: np.ndarray
    C: np.ndarray
    Q_d: np.ndarray
    R_d: np.ndarray

    def __post_init__(self):
        A_d = np.ascontiguousarray(self.A_d, dtype=float)
        C = np.ascontiguousarray(np.atleast_2d(self.C), dtype=float)
        n, m = A_d.shape[0], C.shape[0]
        Q_d = np.ascontiguousarray(self.Q_d, dtype=float).reshape(n, n)
        R_d = np.ascontiguousarray(self.R_d, dtype=float).reshape(m, m)
        if A_d.shape != (n, n) or C.shape != (m, n):
            raise ConfigError(f"inconsistent shapes A_d {A_d.shape}, C {C.shape}")
        for name, v in (("A_d", A_d), ("C", C), ("Q_d", Q_d), ("R_d", R_d)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def n(self):
        return self.A_d.shape[0]


def system_matrices(cfg, I_omega=None):
    """
    Continuous-time ``(A, C, M, N)`` of the right-invariant error model.

    Parameters
    ----------
    cfg : NoiseConfig
    I_omega : (3,) array, optional
        Earth-frame angular rate ``R_q (omega_m - omega_b)``. The steady
        gain design drops this time-varying term (``None`` or zeros).
    """
    I3 = np.eye(3)
    Z3 = np.zeros((3, 3))
    Sg = skew(cfg.g_e)
    Sb = skew(cfg.b_e)
    Iw = Z3 if I_omega is None else skew(I_omega)
    A = np.block([[Z3, -0.5 * I3], [Z3, Iw]])
    C = np.block([[2.0 * Sg @ Sg, Z3], [2.0 * Sb @ Sb, Z3]])
    M = np.block([[0.5 * I3, Z3], [Z3, -I3]])
    N = np.block([[I3 + Sg, Z3], [Z3, I3 - Sb]])
    return A, C, M, N


def build_discrete_system(cfg, I_omega=None):
    """
    Discretize the error model for the DARE.

    Raises
    ------
    SingularN
        If ``N R N^T`` is not positive definite (e.g. a singular ``R``).
    """
    A, C, M, N = system_matrices(cfg, I_omega)
    dt = cfg.dt
    Rd = N @ cfg.R @ N.T
    Rd = 0.5 * (Rd + Rd.T)
    ev = np.linalg.eigvalsh(Rd)
    if not ev[0] > _PD_RTOL * ev[-1]:
        raise SingularN(f"N R N^T is not positive definite (eigenvalues {ev[0]:.3e} .. {ev[-1]:.3e}); "
                        "R must be positive definite")  # fmt: skip
    return DiscreteSystem(np.eye(6) + A * dt, C, M @ cfg.Q @ M.T * dt**2, Rd)


@dataclass
class DareSolution:
    """Result of :func:`solve_dare` with ``full_output=True``."""

    P: np.ndarray
    K: np.ndarray
    iters: int
    residual: float


def riccati_gain(P, C, R_d):
    """``K = P C^T (C P C^T + R_d)^-1``."""
    P = np.ascontiguousarray(P, dtype=float)
    C = np.ascontiguousarray(np.atleast_2d(C), dtype=float)
    R_d = np.ascontiguousarray(np.atleast_2d(R_d), dtype=float)
    K = np.zeros((P.shape[0], C.shape[0]))
    if kernels.riccati_gain(P, C, R_d, K):
        raise SingularInnovation("C P C^T + R_d is not positive definite")
    return K


def riccati_recursion(sys, P0, steps):
    """
    Run the time-varying a-priori Riccati recursion for ``steps`` steps.

    Returns the final ``(P, K)`` where ``K`` is computed from the final
    ``P``. Used as an independent reference for :func:`solve_dare`. The
    loop ends early once ``P`` is bitwise stationary, which leaves the
    result unchanged.
    """
    P = np.array(P0, dtype=float, order="C")
    st, _ = kernels.riccati_iterate(sys.A_d, sys.C, sys.Q_d, sys.R_d, P, int(steps))
    if st == kernels.STATUS_SINGULAR:
        raise SingularInnovation("C P C^T + R_d is not positive definite")
    if st != kernels.STATUS_OK:
        raise NonFiniteState("Riccati recursion produced non-finite entries")
    return P, riccati_gain(P, sys.C, sys.R_d)


def solve_dare(sys, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, P0=None, full_output=False):
    """
    Solve the filtering DARE by fixed-point iteration.

    Parameters
    ----------
    sys : DiscreteSystem
    tol : float
        Stop when the Frobenius norm of ``P+ - P`` (the DARE residual at
        the returned ``P``) is at most ``tol``.
    max_iter : int
    P0 : array, optional
        Starting covariance, identity by default.
    full_output : bool
        Also return iteration count and residual.

    Returns
    -------
    P, K : ndarray
        Steady-state a-priori covariance and gain; a :class:`DareSolution`
        if ``full_output``.

    Raises
    ------
    NoConvergence
        Tolerance not reached in ``max_iter`` iterations (or the iteration
        blew up).
    SingularInnovation
        ``C P C^T + R_d`` lost positive definiteness.
    """
    if not tol > 0:
        raise ConfigError(f"tol must be positive, got {tol}")
    P = np.eye(sys.n) if P0 is None else np.array(P0, dtype=float)
    P = np.ascontiguousarray(P)
    st, iters, res = kernels.dare_fixed_point(sys.A_d, sys.C, sys.Q_d, sys.R_d, P, float(tol), int(max_iter))
    if st == kernels.STATUS_SINGULAR:
        raise SingularInnovation("C P C^T + R_d is not positive definite")
    if st != kernels.STATUS_OK:
        raise NoConvergence(iters, res)
    P = 0.5 * (P + P.T)
    K = riccati_gain(P, sys.C, sys.R_d)
    if full_output:
        return DareSolution(P, K, int(iters), float(res))
    return P, K


def dare_residual(sys, P):
    """Frobenius norm of ``Ric(P) - P`` for the a-priori DARE."""
    Pn = np.empty_like(P)
    if kernels.riccati_step(sys.A_d, sys.C, sys.Q_d, sys.R_d, np.ascontiguousarray(P), Pn):
        raise SingularInnovation("C P C^T + R_d is not positive definite")
    return float(np.linalg.norm(Pn - P))


def _check_mask(mask, shape=(6, 6)):
    out = set()
    for rc in mask:
        r, c = (int(v) for v in rc)
        if not (1 <= r <= shape[0] and 1 <= c <= shape[1]):
            raise IndexOutOfRange(f"mask entry ({r}, {c}) outside 1..{shape[0]} x 1..{shape[1]}")
        out.add((r, c))
    return frozenset(out)


def apply_mask(K, mask):
    """Copy of ``K`` with the 1-based ``(row, col)`` entries in ``mask`` set to 0."""
    K = np.array(K, dtype=float)
    for r, c in _check_mask(mask, K.shape):
        K[r - 1, c - 1] = 0.0
    return K


def keep_matrix(mask, shape=(6, 6)):
    """0/1 matrix with zeros at the masked entries."""
    return apply_mask(np.ones(shape), mask)


@dataclass(frozen=True)
class GainMatrix:
    """
    Constant 6x6 correction gain with an optional zero mask.

    The mask (1-based ``(row, col)`` pairs) is applied on construction, so
    ``K`` always has exact zeros at the masked entries.
    """

    K: np.ndarray
    mask: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        K = np.array(self.K, dtype=float)
        if K.shape != (6, 6):
            raise InvalidGains(f"gain matrix must be 6x6, got {K.shape}")
        if not np.all(np.isfinite(K)):
            raise InvalidGains("gain matrix has non-finite entries")
        mask = _check_mask(self.mask)
        K = apply_mask(K, mask)
        K.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "mask", mask)

    @property
    def attitude_block(self):
        return self.K[:3]

    @property
    def bias_block(self):
        return self.K[3:]

    def keep(self):
        return keep_matrix(self.mask)

    def with_mask(self, mask):
        return GainMatrix(self.K, frozenset(self.mask) | _check_mask(mask))


@dataclass(frozen=True)
class StructuredGains:
    """Diagonal parameters of the four gain blocks plus the off-diagonal residual."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    offdiag: float
    diag_norm: float

    @property
    def relative_offdiag(self):
        return self.offdiag / self.diag_norm if self.diag_norm > 0 else 0.0

    def as_dict(self):
        out = {}
        for name in "abcd":
            for i, v in enumerate(getattr(self, name), 1):
                out[f"{name}{i}"] = float(v)
        return out


_BLOCK_SIGNS = {"a": -1.0, "b": -1.0, "c": 1.0, "d": 1.0}
_BLOCKS = {"a": (0, 0), "b": (0, 3), "c": (3, 0), "d": (3, 3)}


def extract_structured_gains(K):
    """
    Read ``(a, b, c, d)`` off the block diagonals of ``K``.

    Uses the pattern ``K = [[-I_a, -I_b], [I_c, I_d]]`` so that a stable
    gain from :func:`solve_dare` has positive parameters. The Frobenius
    norm of everything off the block diagonals is returned as ``offdiag``.
    """
    K = np.asarray(getattr(K, "K", K), dtype=float)
    vals = {}
    off = 0.0
    for name, (r, c) in _BLOCKS.items():
        blk = K[r : r + 3, c : c + 3]
        vals[name] = _BLOCK_SIGNS[name] * np.diag(blk).copy()
        off += float(np.sum((blk - np.diag(np.diag(blk))) ** 2))
    diag_norm = float(np.sqrt(sum(np.sum(v**2) for v in vals.values())))
    return StructuredGains(vals["a"], vals["b"], vals["c"], vals["d"], float(np.sqrt(off)), diag_norm)


@dataclass(frozen=True)
class Rincf2Params:
    """Angular-rate gain coefficients; bias rows get ``p1 [I_w]x`` and ``p2 [I_w]x``."""

    p1: float
    p2: float
    omega_max: float

    def __post_init__(self):
        if not self.omega_max > 0:
            raise ConfigError(f"omega_max must be positive, got {self.omega_max}")


#: (p1 source, p2 source) as 0-based (row, col) into K.
P_INDEX_CONVENTIONS = {
    "row_col": ((5, 1), (4, 5)),
    "col_row": ((1, 5), (5, 4)),
}


def _ratio(entry, omega_max):
    return 0.0 if abs(entry) < P_ENTRY_TOL else entry / omega_max


def compute_rincf2_params(cfg, omega_max, convention="row_col", tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """
    Rate-dependent gain coefficients from a DARE with ``I_omega = (omega_max, 0, 0)``.

    With ``convention="row_col"`` (default) ``p1 = K[5, 1] / omega_max``
    and ``p2 = -K[4, 5] / omega_max`` (0-based row, col). ``"col_row"``
    swaps row and column of both source entries.
    """
    if not omega_max > 0:
        raise ConfigError(f"omega_max must be positive, got {omega_max}")
    try:
        (r1, c1), (r2, c2) = P_INDEX_CONVENTIONS[convention]
    except KeyError:
        raise ConfigError(f"unknown index convention {convention!r}") from None
    sys = build_discrete_system(cfg, I_omega=np.array([omega_max, 0.0, 0.0]))
    _, K = solve_dare(sys, tol=tol, max_iter=max_iter)
    p1 = float(_ratio(K[r1, c1], omega_max))
    p2 = float(-_ratio(K[r2, c2], omega_max))
    return Rincf2Params(p1, p2 + 0.0, float(omega_max))


@dataclass
class GainReport:
    """Everything the ``tune`` command reports."""

    gain: GainMatrix
    structured: StructuredGains
    residual: float
    iters: int
    P: np.ndarray
    rincf2: list = field(default_factory=list)

    def to_json_dict(self):
        rates = [{"omega_max": p.omega_max, "p1": p.p1, "p2": p.p2} for p in self.rincf2]
        return {
            "K": self.gain.K.tolist(),
            "params": self.structured.as_dict(),
            "p1": rates[0]["p1"] if rates else None,
            "p2": rates[0]["p2"] if rates else None,
            "rincf2": rates,
            "mask": sorted(list(rc) for rc in self.gain.mask),
            "residual": self.residual,
            "iters": self.iters,
        }


def gains_from_json(d):
    """
    Gain matrix and rate terms from a dict shaped like :meth:`GainReport.to_json_dict`.

    Only ``K`` is required; ``mask`` and ``rincf2`` are optional.
    """
    if "K" not in d:
        raise ConfigError("gain report has no 'K' entry")
    K = np.asarray(d["K"], dtype=float)
    if K.shape != (6, 6):
        raise ConfigError(f"gain report K must be 6x6, got shape {K.shape}")
    mask = frozenset(tuple(int(i) for i in rc) for rc in d.get("mask", ()))
    rates = [Rincf2Params(float(r["p1"]), float(r["p2"]), float(r["omega_max"])) for r in d.get("rincf2", ())]
    return GainMatrix(K, mask), rates


def tune(cfg, mask=(), omega_max=(), convention="row_col", tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """
    Full gain-synthesis pipeline: discretize, solve, mask, extract, rate terms.

    ``omega_max`` is a single rate or a sequence of rates; one
    :class:`Rincf2Params` is computed per rate.
    """
    omega_max = np.atleast_1d(np.asarray(omega_max, dtype=float)).tolist()
    sol = solve_dare(build_discrete_system(cfg), tol=tol, max_iter=max_iter, full_output=True)
    gain = GainMatrix(sol.K, frozenset(mask))
    rates = [compute_rincf2_params(cfg, w, convention, tol, max_iter) for w in omega_max]
    return GainReport(gain, extract_structured_gains(sol.K), sol.residual, sol.iters, sol.P, rates)


def reference_gain_sweep(dts, g_norms, b_norms, cfg=None):
    """
    Compare structured gains with :data:`REFERENCE_GAINS` over a grid.

    References are taken along ``e3`` and ``e1`` with the given magnitudes.
    Returns a list of dicts with the grid point, the eight parameters
    (x 1e-3) and the worst relative deviation, best match first.
    """
    cfg = NoiseConfig() if cfg is None else cfg
    rows = []
    for dt in dts:
        for g in g_norms:
            for b in b_norms:
                c = cfg.replace(dt=dt, g_e=np.array([0.0, 0.0, g]), b_e=np.array([b, 0.0, 0.0]))
                _, K = solve_dare(build_discrete_system(c))
                sg = extract_structured_gains(K).as_dict()
                vals = {k: 1e3 * sg[k] for k in REFERENCE_GAINS}
                worst = max(abs(vals[k] - v) / v for k, v in REFERENCE_GAINS.items())
                rows.append({"dt": dt, "g": g, "b": b, "params": vals, "max_rel_err": worst})
    rows.sort(key=lambda r: r["max_rel_err"])
    return rows
