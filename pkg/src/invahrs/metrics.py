"""
Error statistics, gain-trace analysis and the linearized stability harness.

Attitude errors use the right-invariant error ``mu = q_hat * q^-1``: the
geodesic angle ``2 atan2(|mu_v|, |mu_0|)`` and the Z-Y-X Euler angles of
``mu`` per axis.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyWindow
from .filters import clone, run_filter, step
from .riccati import system_matrices
from .sim import rotmats
from .so3 import euler_from_quat, quat_inv, quat_mul

CHANNELS = ("roll", "pitch", "yaw", "angle")
DEFAULT_WINDOW = 2.5


def attitude_error(q_true, q_hat):
    """
    Right-invariant attitude error between two unit quaternions.

    Returns
    -------
    per_axis : (3,) ndarray
        Roll, pitch, yaw of ``mu = q_hat * q_true^-1`` [rad].
    angle : float
        Rotation angle of ``mu`` in [0, pi].
    """
    mu = quat_mul(q_hat, quat_inv(q_true))
    angle = 2.0 * math.atan2(float(np.linalg.norm(mu[1:])), abs(float(mu[0])))
    return np.array(euler_from_quat(mu)), angle


def _error_quats(q_true, q_hat):
    q_true = np.asarray(q_true, dtype=float)
    q_hat = np.asarray(q_hat, dtype=float)
    a1, b1, c1, d1 = q_hat.T
    a2, b2, c2, d2 = (q_true * np.array([1.0, -1.0, -1.0, -1.0])).T
    return np.stack(
        [
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ],
        axis=-1,
    )


def _euler_rows(q):
    a, b, c, d = q.T
    roll = np.arctan2(2.0 * (a * b + c * d), 1.0 - 2.0 * (b * b + c * c))
    pitch = np.arcsin(np.clip(2.0 * (a * c - d * b), -1.0, 1.0))
    yaw = np.arctan2(2.0 * (a * d + b * c), 1.0 - 2.0 * (c * c + d * d))
    return roll, pitch, yaw


@dataclass
class ErrorSeries:
    t: np.ndarray
    err_roll: np.ndarray
    err_pitch: np.ndarray
    err_yaw: np.ndarray
    err_angle: np.ndarray

    def channel(self, name):
        return getattr(self, f"err_{name}")


def error_series(t, q_true, q_hat):
    """Vectorized :func:`attitude_error` over rows (no gimbal-lock warning)."""
    mu = _error_quats(q_true, q_hat)
    roll, pitch, yaw = _euler_rows(mu)
    angle = 2.0 * np.arctan2(np.linalg.norm(mu[:, 1:], axis=1), np.abs(mu[:, 0]))
    return ErrorSeries(np.asarray(t, dtype=float), roll, pitch, yaw, angle)


@dataclass
class SummaryStats:
    """Per-channel mean and std over ``t >= window_start`` plus the total-angle RMS."""

    mean: dict
    std: dict
    window_start: float
    rms_angle: float
    n: int


def summarize(series, window_start=DEFAULT_WINDOW):
    """Statistics of ``series`` after the convergence window."""
    m = series.t >= window_start
    if not np.any(m):
        raise EmptyWindow(f"no samples at or after t={window_start} (series ends at {series.t[-1]})")
    mean, std = {}, {}
    for ch in CHANNELS:
        v = series.channel(ch)[m]
        mean[ch] = float(np.mean(v))
        std[ch] = float(np.std(v))
    rms = float(np.sqrt(np.mean(series.err_angle[m] ** 2)))
    return SummaryStats(mean, std, float(window_start), rms, int(np.count_nonzero(m)))


@dataclass
class GainTrace:
    t: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        if len(self.t) != len(self.K):
            raise ConfigError("gain trace times and matrices differ in length")

    @classmethod
    def from_run(cls, run):
        return cls(np.asarray(run.gain_t), np.asarray(run.gains))

    def tail(self, tail_fraction):
        if not 0 < tail_fraction <= 1:
            raise ConfigError(f"tail_fraction must be in (0, 1], got {tail_fraction}")
        n = len(self.K)
        start = min(n - 1, int(math.floor(n * (1.0 - tail_fraction))))
        return self.K[start:]

    def tail_mean(self, tail_fraction=0.5):
        return self.tail(tail_fraction).mean(axis=0)


def gain_stationarity(trace, tail_fraction=0.5):
    """Per-entry ``std / max(|mean|, 1e-9)`` over the trailing fraction of the trace."""
    tail = trace.tail(tail_fraction)
    return tail.std(axis=0) / np.maximum(np.abs(tail.mean(axis=0)), 1e-9)


def linearized_blocks(K, cfg):
    """
    Continuous-time ``(A_mu, A_beta)`` of the linearized right-invariant error.

    With the correction applied once per sample the equivalent rates are
    ``A_mu = -K_q C / dt`` and ``A_beta = -K_b C / dt`` where ``C`` is the
    attitude column of the output matrix.
    """
    K = np.asarray(getattr(K, "K", K), dtype=float)
    _, C, _, _ = system_matrices(cfg)
    Ca = C[:, :3]
    return -K[:3] @ Ca / cfg.dt, -K[3:] @ Ca / cfg.dt


def structured_blocks(params, cfg):
    """Diagonal ``(A_mu, A_beta)`` from the structured gains for aligned references."""
    g2 = float(cfg.g_e @ cfg.g_e)
    b2 = float(cfg.b_e @ cfg.b_e)
    p = params if isinstance(params, dict) else params.as_dict()
    s = 2.0 / cfg.dt
    A_mu = -s * np.diag([g2 * p["a1"], g2 * p["a2"] + b2 * p["b2"], b2 * p["b3"]])
    A_beta = s * np.diag([g2 * p["c1"], g2 * p["c2"] + b2 * p["d2"], b2 * p["d3"]])
    return A_mu, A_beta


def lyapunov_series(err_mu, err_beta, A_beta):
    """``V = db^T db + (2 A_beta dmu)^T dmu`` at every row."""
    mu = np.atleast_2d(np.asarray(err_mu, dtype=float))
    beta = np.atleast_2d(np.asarray(err_beta, dtype=float))
    return np.einsum("ij,ij->i", beta, beta) + 2.0 * np.einsum("ij,kj,ik->i", mu, np.asarray(A_beta), mu)


def linearized_trajectory(A_mu, A_beta, dmu0, dbeta0, duration, h=1e-3, I_omega=None):
    """
    RK4 solution of ``dmu' = -1/2 db + A_mu dmu``, ``db' = I_w x db + A_beta dmu``.

    ``I_omega`` is an optional callable ``t -> (3,)`` for the earth-frame rate.
    Returns ``(t, dmu, dbeta)``.
    """
    n = int(round(duration / h))
    t = np.arange(n + 1) * h
    x = np.empty((n + 1, 6))
    x[0] = np.r_[dmu0, dbeta0]

    def f(tk, xk):
        mu, beta = xk[:3], xk[3:]
        db = A_beta @ mu
        if I_omega is not None:
            db = db + np.cross(I_omega(tk), beta)
        return np.r_[-0.5 * beta + A_mu @ mu, db]

    for k in range(n):
        tk, xk = t[k], x[k]
        k1 = f(tk, xk)
        k2 = f(tk + 0.5 * h, xk + 0.5 * h * k1)
        k3 = f(tk + 0.5 * h, xk + 0.5 * h * k2)
        k4 = f(tk + h, xk + h * k3)
        x[k + 1] = xk + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return t, x[:, :3], x[:, 3:]


def invariant_errors(q_true, bias_true, q_hat, bias_hat):
    """
    Right-invariant error coordinates of a run.

    ``dmu`` is the vector part of ``q_hat * q^-1`` (scalar part made
    positive); ``dbeta = R_q (bias_hat - bias)``.
    """
    mu = _error_quats(q_true, q_hat)
    mu *= np.where(mu[:, :1] < 0, -1.0, 1.0)
    R = rotmats(q_true)
    dbeta = np.einsum("nij,nj->ni", R, np.asarray(bias_hat) - np.asarray(bias_true))
    return mu[:, 1:], dbeta


def step_time_us(s, log, n_steps=10_000, warmup=1000):
    """
    Median wall time of one :func:`~invahrs.filters.step` call [us].

    A private copy of ``s`` replays the samples of ``log`` cyclically;
    the first ``warmup`` steps are discarded and ``n_steps`` are timed
    with a monotonic clock.
    """
    if n_steps < 1 or warmup < 0:
        raise ConfigError("need n_steps >= 1 and warmup >= 0")
    if len(log) < 2:
        raise ConfigError("timing needs at least two samples")
    s = clone(s)
    samples = [log[k] for k in range(1, len(log))]
    dts = np.diff(np.asarray(log.t, dtype=float)).tolist()
    m = len(samples)
    clock = time.perf_counter
    out = np.empty(n_steps)
    for i in range(warmup + n_steps):
        j = i % m
        t0 = clock()
        step(s, samples[j], dts[j])
        dt = clock() - t0
        if i >= warmup:
            out[i - warmup] = dt
    return float(np.median(out)) * 1e6


@dataclass
class CompareRow:
    name: str
    stats: SummaryStats
    step_us: float | None = None


def _fmt(v):
    return "" if v is None else repr(float(v))


def comparison_csv(rows):
    """Comparison table as CSV text (angles in rad, step time in microseconds)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["filter"]
    for ch in CHANNELS:
        head += [f"mean_{ch}", f"std_{ch}"]
    head += ["rms_angle", "step_us"]
    w.writerow(head)
    for r in rows:
        line = [r.name]
        for ch in CHANNELS:
            line += [_fmt(r.stats.mean[ch]), _fmt(r.stats.std[ch])]
        line += [_fmt(r.stats.rms_angle), _fmt(r.step_us)]
        w.writerow(line)
    return buf.getvalue()


def comparison_text(rows):
    """Aligned plain-text table (angles in degrees)."""
    head = ["filter"] + [f"{ch} mean/std" for ch in CHANNELS] + ["rms [deg]", "step [us]"]
    body = []
    d = 180.0 / math.pi
    for r in rows:
        cells = [r.name]
        for ch in CHANNELS:
            cells.append(f"{r.stats.mean[ch] * d:+.3f}/{r.stats.std[ch] * d:.3f}")
        cells.append(f"{r.stats.rms_angle * d:.4f}")
        cells.append("-" if r.step_us is None else f"{r.step_us:.2f}")
        body.append(cells)
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    lines = ["  ".join(c.ljust(wd) for c, wd in zip(row, widths)).rstrip() for row in [head] + body]
    return "\n".join(lines) + "\n"


def compare(log, bank, window_start=DEFAULT_WINDOW, timing=False, n_steps=10_000, warmup=1000):
    """
    Run every filter of ``bank`` (name -> state) on ``log`` against its truth.

    Returns ``(rows, runs)``: one :class:`CompareRow` per filter and the
    :class:`~invahrs.filters.FilterRun` objects keyed like ``bank``. The
    states in ``bank`` are not modified.
    """
    if log.truth is None:
        raise ConfigError("comparison needs a log with truth")
    rows, runs = [], {}
    for name, s0 in bank.items():
        us = step_time_us(s0, log, n_steps, warmup) if timing else None
        run = run_filter(clone(s0), log)
        stats = summarize(error_series(log.t, log.truth.q, run.q), window_start)
        rows.append(CompareRow(name, stats, us))
        runs[name] = run
    return rows, runs
