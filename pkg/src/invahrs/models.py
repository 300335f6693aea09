"""
System and measurement models, noise configuration and invariant output errors.

The state is ``x = (q, omega_b)``: attitude quaternion and gyro bias. The
inputs are the gyro rate ``omega_m`` and the outputs are the body-frame
accelerometer and magnetometer readings ``y_a = -R_q^T g_e`` and
``y_b = R_q^T b_e`` (plus noise).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .so3 import quat_mul, quat_to_rotmat, vec_quat

_PSD_TOL = 1e-12


def _frozen(a, shape, name):
    a = np.array(a, dtype=float)
    if a.shape != shape:
        raise ConfigError(f"{name} must have shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


@dataclass
class AttState:
    """Attitude quaternion ``q`` ({E} -> {B}) and gyro bias ``omega_b`` [rad/s]."""

    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    omega_b: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def copy(self):
        return AttState(self.q.copy(), self.omega_b.copy())

    def as_vector(self):
        return np.r_[self.q, self.omega_b]


@dataclass
class ImuSample:
    """One row of a sensor log: time, gyro, accelerometer, magnetometer."""

    t: float
    omega_m: np.ndarray
    y_a: np.ndarray
    y_b: np.ndarray


@dataclass(frozen=True)
class NoiseConfig:
    """
    Noise statistics and reference vectors shared by the filters and the simulator.

    Parameters
    ----------
    Q : (6, 6) array
        Process noise covariance of ``(w_omega_m, w_omega_b)``.
    R : (6, 6) array
        Measurement noise covariance of ``(nu_a, nu_b)``. Positive
        semi-definite is accepted here so a noiseless simulation can be
        described; gain synthesis requires it to be positive definite.
    g_e, b_e : (3,) array
        Gravity and magnetic references in the earth frame.
    dt : float
        Nominal sample period [s].
    """

    Q: np.ndarray = field(default_factory=lambda: 0.1 * np.eye(6))
    R: np.ndarray = field(default_factory=lambda: np.diag([0.3] * 3 + [0.5] * 3))
    g_e: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 9.81]))
    b_e: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    dt: float = 0.005

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "Q", _frozen(self.Q, (6, 6), "Q"))
        set_(self, "R", _frozen(self.R, (6, 6), "R"))
        set_(self, "g_e", _frozen(self.g_e, (3,), "g_e"))
        set_(self, "b_e", _frozen(self.b_e, (3,), "b_e"))
        set_(self, "dt", float(self.dt))
        for name in ("Q", "R"):
            m = getattr(self, name)
            if not np.allclose(m, m.T, rtol=0.0, atol=1e-12):
                raise ConfigError(f"{name} is not symmetric")
            lo = np.linalg.eigvalsh(m).min()
            if lo < -_PSD_TOL:
                raise ConfigError(f"{name} is not positive semi-definite (min eigenvalue {lo:.3e})")
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if np.linalg.norm(self.g_e) == 0 or np.linalg.norm(self.b_e) == 0:
            raise ConfigError("reference vectors must be non-zero")

    def replace(self, **changes):
        kw = dict(Q=self.Q, R=self.R, g_e=self.g_e, b_e=self.b_e, dt=self.dt)
        kw.update(changes)
        return NoiseConfig(**kw)

    def is_noiseless(self):
        return not (np.any(self.Q) or np.any(self.R))


@dataclass
class OutputError:
    """Cross-product output error, accelerometer part ``e_g`` and compass part ``e_b``."""

    e_g: np.ndarray
    e_b: np.ndarray

    @property
    def stacked(self):
        return np.r_[self.e_g, self.e_b]


@dataclass(frozen=True)
class GroupElement:
    """Element ``(q0, omega_b0)`` of SU(2) x R^3."""

    q0: np.ndarray
    omega_b0: np.ndarray

    @classmethod
    def identity(cls):
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))


def predict_measurements(q_hat, cfg):
    """Predicted ``(y_a_hat, y_b_hat) = (-R^T g_e, R^T b_e)`` for attitude ``q_hat``."""
    Rt = quat_to_rotmat(q_hat).T
    return -Rt @ cfg.g_e, Rt @ cfg.b_e


def _measured(y):
    if isinstance(y, ImuSample):
        return y.y_a, y.y_b
    return y


def output_error_left(y, y_hat):
    """
    Body-frame cross-product error ``(y_a_hat x y_a, y_b_hat x y_b)``.

    ``y`` is an :class:`ImuSample` or a ``(y_a, y_b)`` pair.
    """
    y_a, y_b = _measured(y)
    ya_hat, yb_hat = y_hat
    return OutputError(np.cross(ya_hat, y_a), np.cross(yb_hat, y_b))


def output_error_right(q_hat, y, y_hat):
    """Earth-frame cross-product error ``R_q_hat (y_hat x y)``, block-wise."""
    e = output_error_left(y, y_hat)
    R = quat_to_rotmat(q_hat)
    return OutputError(R @ e.e_g, R @ e.e_b)


def dynamics(x, omega_m):
    """Noiseless state derivative ``(1/2 q * (omega_m - omega_b), 0)``."""
    qdot = 0.5 * quat_mul(x.q, vec_quat(np.asarray(omega_m) - x.omega_b))
    return qdot, np.zeros(3)


def _with_measurements(y, y_a, y_b):
    if isinstance(y, ImuSample):
        return ImuSample(y.t, y.omega_m, y_a, y_b)
    return y_a, y_b


def apply_left_action(g, x, u, cfg, y):
    """
    Left symmetry: ``q -> q0 * q``, ``omega_b -> omega_b + omega_b0``.

    Inputs shift by ``omega_b0``, references rotate by ``R_q0``, outputs are
    unchanged. Returns the transformed ``(x, u, cfg, y)``.
    """
    R0 = quat_to_rotmat(g.q0)
    x2 = AttState(quat_mul(g.q0, x.q), x.omega_b + g.omega_b0)
    u2 = np.asarray(u) + g.omega_b0
    cfg2 = cfg.replace(g_e=R0 @ cfg.g_e, b_e=R0 @ cfg.b_e)
    return x2, u2, cfg2, y


def apply_right_action(g, x, u, cfg, y):
    """
    Right symmetry: ``q -> q * q0``, ``omega_b -> R_q0^T omega_b + omega_b0``.

    Inputs transform like the bias, outputs rotate by ``R_q0^T`` and the
    references are unchanged.
    """
    Rt = quat_to_rotmat(g.q0).T
    x2 = AttState(quat_mul(x.q, g.q0), Rt @ x.omega_b + g.omega_b0)
    u2 = Rt @ np.asarray(u) + g.omega_b0
    y_a, y_b = _measured(y)
    return x2, u2, cfg, _with_measurements(y, Rt @ y_a, Rt @ y_b)


def compose_left(g1, g2):
    """Group element acting as ``apply_left_action(g1, .) o apply_left_action(g2, .)``."""
    return GroupElement(quat_mul(g1.q0, g2.q0), g1.omega_b0 + g2.omega_b0)


def compose_right(g1, g2):
    """Group element acting as ``apply_right_action(g1, .) o apply_right_action(g2, .)``."""
    R1t = quat_to_rotmat(g1.q0).T
    return GroupElement(quat_mul(g2.q0, g1.q0), R1t @ g2.omega_b0 + g1.omega_b0)

