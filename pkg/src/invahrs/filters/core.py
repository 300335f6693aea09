"""
Filter bank with a shared step interface.

Every filter runs predict-then-update once per sample: an explicit Euler
step of the gyro kinematics (with renormalization) followed by a discrete
correction from the accelerometer and magnetometer.

* ``NCF``: constant-gain complementary filter, body-frame error.
* ``LIEKF_STAR`` / ``RIEKF_STAR``: invariant EKFs with the cross-product
  output error; the gain comes from a per-step Riccati update of ``P``.
* ``RINCF``: the right-invariant correction with a constant gain, usually
  the steady-state DARE gain from :mod:`invahrs.riccati`.
* ``RINCF2``: ``RINCF`` with bias-row gains modulated by the earth-frame
  rate ``I_w = R_q (omega_m - omega_b)``.
* ``EKF``: additive-error baseline (see :mod:`.ekf`).
* ``WAB``: per-sample Wahba solution, no filtering.

The starred filters and ``RINCF`` use the correction

    right:  q <- normalize(q + (K_q E) * q),  omega_b <- omega_b + R_q^T (K_b E)
    left:   q <- normalize(q + q * (K_q E)),  omega_b <- omega_b + K_b E

with ``E`` the cross-product error ``y_hat x y`` (rotated to the earth
frame for the right-invariant filters).
"""

from __future__ import annotations

import copy
import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .. import _backend
from ..errors import InvalidGains, MissingGains, NonFiniteState, SingularInnovation
from ..models import AttState, OutputError
from ..riccati import GainMatrix, Rincf2Params, compute_rincf2_params, keep_matrix, tune
from ..so3 import euler_from_quat
from . import ekf as _ekf
from .wahba import default_weights, wahba_batch, wahba_svd


class FilterKind(enum.Enum):
    NCF = "ncf"
    LIEKF_STAR = "liekf_star"
    RIEKF_STAR = "riekf_star"
    RINCF = "rincf"
    RINCF2 = "rincf2"
    EKF = "ekf"
    WAB = "wab"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_").replace("*", "_star")
        for k in cls:
            if k.value == key:
                return k
        raise ValueError(f"unknown filter {name!r}; choose from {', '.join(k.value for k in cls)}")

    @property
    def adaptive(self):
        """Gain recomputed every step from a covariance."""
        return self in (FilterKind.LIEKF_STAR, FilterKind.RIEKF_STAR, FilterKind.EKF)


@dataclass(frozen=True)
class NcfGains:
    """Proportional, integral and per-sensor weights of the complementary filter."""

    k_p: float = 1.0
    k_i: float = 0.1
    k_1: float = 0.5
    k_2: float = 0.5

    def __post_init__(self):
        for name in ("k_p", "k_i", "k_1", "k_2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise InvalidGains(f"NCF gain {name} must be positive, got {v}")


@dataclass
class FilterState:
    """
    Mutable per-filter state.

    ``P`` exists for the covariance-based filters (6x6 for the invariant
    EKFs, 7x7 for the EKF). ``K_current`` is the gain applied at the last
    step.
    """

    kind: FilterKind
    cfg: object
    x_hat: AttState
    P: np.ndarray | None = None
    K_current: object = None
    t: float = 0.0
    gains: object = None
    rate_params: Rincf2Params | None = None
    wahba_weights: tuple | None = None
    backend: object = None
    _keep: np.ndarray | None = field(default=None, repr=False)


@dataclass
class StepOutput:
    x_hat: AttState
    E: OutputError
    K_used: object
    euler: tuple


def _trusted_gain(K, mask):
    g = object.__new__(GainMatrix)
    object.__setattr__(g, "K", K)
    object.__setattr__(g, "mask", mask)
    return g


def _state_vectors(x0):
    q = np.ascontiguousarray(x0.q, dtype=float).copy()
    q /= np.linalg.norm(q)
    return AttState(q, np.ascontiguousarray(x0.omega_b, dtype=float).copy())


def init(kind, cfg, gains=None, rate_params=None, x0=None, backend=None, wahba_weights=None):
    """
    Initial filter state: identity attitude and zero bias unless ``x0`` is given.

    Parameters
    ----------
    kind : FilterKind or str
    cfg : NoiseConfig
        Noise model and references the filter is designed for.
    gains : GainMatrix, ndarray, NcfGains or (GainMatrix, Rincf2Params)
        Required for NCF, RINCF and RINCF2.
    rate_params : Rincf2Params, optional
        RINCF2 rate coefficients (alternatively passed inside ``gains``).
    x0 : AttState, optional
    backend : str, optional
        ``"cython"`` or ``"python"`` kernels; default is the import-time choice.
    """
    kind = FilterKind.parse(kind)
    kern = _backend.kernels if backend is None else _backend.get(backend)
    x = _state_vectors(x0 if x0 is not None else AttState())
    s = FilterState(kind, cfg, x, backend=kern)
    if kind is FilterKind.NCF:
        if gains is None:
            raise MissingGains("NCF needs NcfGains")
        if not isinstance(gains, NcfGains):
            raise InvalidGains(f"NCF expects NcfGains, got {type(gains).__name__}")
        s.gains = s.K_current = gains
    elif kind in (FilterKind.RINCF, FilterKind.RINCF2):
        if isinstance(gains, tuple):
            gains, rate_params = gains
        if gains is None:
            raise MissingGains(f"{kind.value} needs a gain matrix")
        if not isinstance(gains, GainMatrix):
            gains = GainMatrix(gains)
        if kind is FilterKind.RINCF2:
            if rate_params is None:
                raise MissingGains("rincf2 needs Rincf2Params")
            if not isinstance(rate_params, Rincf2Params):
                raise InvalidGains(f"rincf2 expects Rincf2Params, got {type(rate_params).__name__}")
            s.rate_params = rate_params
        s.gains = s.K_current = gains
        s._keep = np.ascontiguousarray(keep_matrix(gains.mask))
    elif kind in (FilterKind.LIEKF_STAR, FilterKind.RIEKF_STAR):
        s.P = np.eye(6)
        s.K_current = _trusted_gain(np.zeros((6, 6)), frozenset())
    elif kind is FilterKind.EKF:
        s.P = np.eye(7)
        s.K_current = np.zeros((7, 6))
    elif kind is FilterKind.WAB:
        s.wahba_weights = wahba_weights if wahba_weights is not None else default_weights(cfg)
    return s


def _vec(v):
    return np.ascontiguousarray(v, dtype=float)


def _check(st, s, t):
    if st == 0:
        return
    if st == 2 and (s.P is None or np.all(np.isfinite(s.P))):
        raise SingularInnovation(f"innovation covariance not positive definite at t={t}")
    raise NonFiniteState(f"{s.kind.value} state became non-finite at t={t}", t=t)


def _output(s, E, K_used):
    return StepOutput(s.x_hat.copy(), OutputError(E[:3].copy(), E[3:].copy()), K_used, euler_from_quat(s.x_hat.q))


def step_ncf(s, u, g, dt):
    """Complementary-filter step; ``E`` in the output holds the two raw cross products."""
    E = np.empty(6)
    x = s.x_hat
    st = s.backend.ncf_step(
        x.q, x.omega_b, _vec(u.omega_m), _vec(u.y_a), _vec(u.y_b), float(dt),
        s.cfg.g_e, s.cfg.b_e, g.k_p, g.k_i, g.k_1, g.k_2, E,
    )  # fmt: skip
    s.t = u.t
    _check(st, s, u.t)
    return _output(s, E, g)


def _iekf(s, u, cfg, dt, right):
    E = np.empty(6)
    K = np.empty((6, 6))
    x = s.x_hat
    st = s.backend.iekf_step(
        right, x.q, x.omega_b, s.P, _vec(u.omega_m), _vec(u.y_a), _vec(u.y_b), float(dt),
        cfg.g_e, cfg.b_e, cfg.Q, cfg.R, E, K,
    )  # fmt: skip
    s.t = u.t
    _check(st, s, u.t)
    s.K_current = _trusted_gain(K, frozenset())
    return _output(s, E, s.K_current), s


def step_liekf_star(s, u, cfg, dt):
    """Left-invariant EKF step (body-frame error, left correction)."""
    return _iekf(s, u, cfg, dt, False)


def step_riekf_star(s, u, cfg, dt):
    """Right-invariant EKF step (earth-frame error, right correction)."""
    return _iekf(s, u, cfg, dt, True)


def _rincf(s, u, K, p1, p2, cfg, dt):
    E = np.empty(6)
    Keff = np.empty((6, 6))
    x = s.x_hat
    keep = s._keep if s._keep is not None and K is s.gains else np.ascontiguousarray(keep_matrix(K.mask))
    st = s.backend.rincf_step(
        x.q, x.omega_b, _vec(u.omega_m), _vec(u.y_a), _vec(u.y_b), float(dt),
        cfg.g_e, cfg.b_e, K.K, p1, p2, keep, E, Keff,
    )  # fmt: skip
    s.t = u.t
    _check(st, s, u.t)
    s.K_current = K if p1 == 0.0 and p2 == 0.0 else _trusted_gain(Keff, K.mask)
    return _output(s, E, s.K_current)


def step_rincf(s, u, K, cfg, dt):
    """Constant-gain right-invariant step."""
    return _rincf(s, u, K, 0.0, 0.0, cfg, dt)


def step_rincf2(s, u, K, p, cfg, dt):
    """Right-invariant step with bias gains ``K_b + [p1 [I_w]x, p2 [I_w]x]`` (mask applied after)."""
    return _rincf(s, u, K, float(p.p1), float(p.p2), cfg, dt)


def step_ekf(s, u, cfg, dt):
    """Additive-error EKF step; ``E`` holds the innovation ``y - h(q)``."""
    x = s.x_hat
    q, b, P, nu, K = _ekf.ekf_step(x.q, x.omega_b, s.P, _vec(u.omega_m), _vec(u.y_a), _vec(u.y_b), cfg, dt)
    x.q[:] = q
    x.omega_b[:] = b
    s.P = P
    s.K_current = K
    s.t = u.t
    return _output(s, nu, K), s


def step_wab(s, u, cfg, dt=None):
    """Snapshot Wahba solution; the bias estimate stays at zero."""
    w_a, w_b = s.wahba_weights
    s.x_hat.q[:] = wahba_svd(u.y_a, u.y_b, cfg, w_a, w_b)
    s.t = u.t
    return _output(s, np.zeros(6), None)


def step(s, u, dt):
    """Advance any filter by one sample; returns ``(StepOutput, state)``."""
    kind = s.kind
    if kind is FilterKind.RINCF:
        return step_rincf(s, u, s.gains, s.cfg, dt), s
    if kind is FilterKind.RINCF2:
        return step_rincf2(s, u, s.gains, s.rate_params, s.cfg, dt), s
    if kind is FilterKind.RIEKF_STAR:
        return step_riekf_star(s, u, s.cfg, dt)
    if kind is FilterKind.LIEKF_STAR:
        return step_liekf_star(s, u, s.cfg, dt)
    if kind is FilterKind.NCF:
        return step_ncf(s, u, s.gains, dt), s
    if kind is FilterKind.EKF:
        return step_ekf(s, u, s.cfg, dt)
    return step_wab(s, u, s.cfg, dt), s


@dataclass
class FilterRun:
    """
    Estimates for a whole log, one row per sample.

    Row 0 is the initial state (WAB solves it directly); rows ``k >= 1``
    come from a step with ``dt = t[k] - t[k-1]``. ``gain_t``/``gains`` hold
    the applied gain every ``gain_every`` samples for filters whose gain
    changes over time.
    """

    kind: FilterKind
    t: np.ndarray
    q: np.ndarray
    bias: np.ndarray
    E: np.ndarray
    gain_t: np.ndarray
    gains: np.ndarray
    step_seconds: np.ndarray | None = None

    def euler(self):
        return np.array([euler_from_quat(q) for q in self.q])


def _gain_array(K):
    if K is None or isinstance(K, NcfGains):
        return None
    return np.asarray(getattr(K, "K", K))


def _run_rincf(s, log, gain_every):
    # same arithmetic as step_rincf/step_rincf2, minus the per-step objects
    n = len(log)
    t = np.asarray(log.t, dtype=float)
    w_m = np.ascontiguousarray(log.omega_m, dtype=float)
    y_a = np.ascontiguousarray(log.y_a, dtype=float)
    y_b = np.ascontiguousarray(log.y_b, dtype=float)
    q = np.empty((n, 4))
    bias = np.empty((n, 3))
    E = np.zeros((n, 6))
    xq, xb = s.x_hat.q, s.x_hat.omega_b
    q[0], bias[0] = xq, xb
    K = s.gains
    p1, p2 = (0.0, 0.0) if s.rate_params is None else (float(s.rate_params.p1), float(s.rate_params.p2))
    adaptive = s.kind is FilterKind.RINCF2
    Keff = np.empty((6, 6))
    gain_t, gains = [], []
    if adaptive:
        gain_t.append(t[0])
        gains.append(np.array(K.K))
    kern, cfg, keep, Km = s.backend, s.cfg, s._keep, K.K
    g_e, b_e = cfg.g_e, cfg.b_e
    for k in range(1, n):
        st = kern.rincf_step(
            xq, xb, w_m[k], y_a[k], y_b[k], float(t[k] - t[k - 1]),
            g_e, b_e, Km, p1, p2, keep, E[k], Keff,
        )  # fmt: skip
        if st:
            s.t = float(t[k])
            _check(st, s, s.t)
        q[k] = xq
        bias[k] = xb
        if adaptive and k % gain_every == 0:
            gain_t.append(t[k])
            gains.append(Keff.copy())
    s.t = float(t[-1])
    if adaptive and n > 1:
        s.K_current = _trusted_gain(Keff.copy(), K.mask)
    gains_arr = np.array(gains) if gains else np.zeros((0, 6, 6))
    return FilterRun(s.kind, t, q, bias, E, np.array(gain_t), gains_arr)


def run_filter(s, log, gain_every=5, time_steps=False):
    """
    Run ``s`` over every sample of ``log`` (a :class:`~invahrs.sim.SensorLog`).

    ``s`` is advanced in place. With ``time_steps`` the wall time of each
    step call is recorded with a monotonic clock.
    """
    n = len(log)
    q = np.empty((n, 4))
    bias = np.empty((n, 3))
    E = np.zeros((n, 6))
    track = s.kind.adaptive or s.kind is FilterKind.RINCF2
    gain_t, gains = [], []
    secs = np.zeros(n) if time_steps else None
    clock = time.perf_counter

    if s.kind is FilterKind.WAB and not time_steps:
        w_a, w_b = s.wahba_weights
        q = wahba_batch(log.y_a, log.y_b, s.cfg, w_a, w_b)
        s.x_hat.q[:] = q[-1]
        s.t = float(log.t[-1])
        return FilterRun(s.kind, np.asarray(log.t), q, np.zeros((n, 3)), E, np.zeros(0), np.zeros((0, 6, 6)))

    if s.kind in (FilterKind.RINCF, FilterKind.RINCF2) and not time_steps:
        return _run_rincf(s, log, gain_every)

    s.t = float(log.t[0])
    if s.kind is FilterKind.WAB:
        out, _ = step(s, log[0], None)
    else:
        out = None
    q[0] = s.x_hat.q
    bias[0] = s.x_hat.omega_b
    if track:
        gain_t.append(log.t[0])
        gains.append(np.array(_gain_array(s.K_current), dtype=float))
    for k in range(1, n):
        u = log[k]
        dt = float(log.t[k] - log.t[k - 1])
        if time_steps:
            t0 = clock()
            out, _ = step(s, u, dt)
            secs[k] = clock() - t0
        else:
            out, _ = step(s, u, dt)
        q[k] = out.x_hat.q
        bias[k] = out.x_hat.omega_b
        E[k] = out.E.stacked
        if track and k % gain_every == 0:
            gain_t.append(log.t[k])
            gains.append(np.array(_gain_array(out.K_used), dtype=float))
    gains_arr = np.array(gains) if gains else np.zeros((0, 6, 6))
    return FilterRun(s.kind, np.asarray(log.t), q, bias, E, np.array(gain_t), gains_arr, secs)


ALL_KINDS = tuple(FilterKind)


def build_bank(cfg, kinds=ALL_KINDS, report=None, omega_max=None, ncf_gains=None, x0=None, backend=None):
    """
    Freshly initialized filters keyed by kind value.

    Fixed-gain filters get their gains from ``report`` (a
    :class:`~invahrs.riccati.GainReport`), tuned on ``cfg`` when omitted.
    RINCF2 uses the first rate entry of the report, or one computed for
    ``omega_max`` (default pi/3 rad/s).
    """
    kinds = [FilterKind.parse(k) for k in kinds]
    need_k = any(k in (FilterKind.RINCF, FilterKind.RINCF2) for k in kinds)
    if report is None and need_k:
        report = tune(cfg)
    bank = {}
    for kind in kinds:
        gains = None
        if kind is FilterKind.NCF:
            gains = ncf_gains or NcfGains()
        elif kind is FilterKind.RINCF:
            gains = report.gain
        elif kind is FilterKind.RINCF2:
            if report.rincf2 and omega_max is None:
                rp = report.rincf2[0]
            else:
                rp = compute_rincf2_params(cfg, float(np.pi / 3 if omega_max is None else omega_max))
            gains = (report.gain, rp)
        bank[kind.value] = init(kind, cfg, gains, x0=x0, backend=backend)
    return bank


def clone(s):
    """Independent copy of a filter state (arrays copied, backend shared)."""
    kern = s.backend
    s.backend = None
    try:
        out = copy.deepcopy(s)
    finally:
        s.backend = kern
    out.backend = kern
    return out
