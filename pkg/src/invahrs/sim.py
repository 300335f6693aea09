"""
Trajectory and IMU measurement simulator.

Ground truth is integrated with classical RK4 on ``qdot = 1/2 q * omega(t)``
from sinusoidal body-rate profiles. The gyro bias follows a random walk and
the sensors are corrupted by white Gaussian noise:

* gyro rate noise ``n_g ~ N(0, Q[:3, :3] / dt)`` per sample,
* bias increments ``n_b dt`` with ``n_b ~ N(0, Q[3:, 3:] / dt)``,
* accelerometer and magnetometer noise ``N(0, R_a)``, ``N(0, R_b)`` per sample.

Q is therefore read as a continuous-time density and R as a per-sample
covariance. ``SimRun(noise_units="per_sample")`` instead reads Q the way the
filters discretize it: gyro noise ``N(0, Q[:3, :3])`` per sample and bias
increments ``N(0, Q[3:, 3:]) dt``. Random numbers come from numpy's PCG64 bit generator seeded
through ``SeedSequence(seed)``; the bias walk and the sensor noise use two
spawned child streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonFiniteState
from .models import ImuSample, NoiseConfig

_PI = math.pi
NOISE_UNITS = ("density", "per_sample")

#: (amplitude rad/s, frequency Hz, phase rad) per axis.
CASES = {
    1: (
        (_PI / 3, _PI / 3, _PI / 3),
        (0.7, 0.2, 0.4),
        (_PI / 3, _PI, 0.0),
    ),
    2: (
        (_PI, _PI, _PI),
        (0.7, 0.02, 0.04),
        (0.0, _PI, _PI / 3),
    ),
    3: (
        (5 * _PI / 3, 5 * _PI / 3, 5 * _PI / 3),
        (0.07, 0.02, 0.04),
        (_PI / 3, _PI, 0.0),
    ),
}


@dataclass(frozen=True)
class TrajectoryCase:
    """
    Body angular rate ``omega_i(t) = A_i sin(2 pi f_i t + phi_i)``.

    Use :meth:`case` for the three built-in profiles (low, medium and high
    rates) or :meth:`custom` for arbitrary sinusoids.
    """

    amplitude: np.ndarray
    frequency: np.ndarray
    phase: np.ndarray
    case_id: int | None = None

    def __post_init__(self):
        for name in ("amplitude", "frequency", "phase"):
            v = np.array(getattr(self, name), dtype=float).reshape(3)
            if not np.all(np.isfinite(v)):
                raise ConfigError(f"{name} must be finite")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if np.any(self.frequency < 0):
            raise ConfigError("frequencies must be non-negative")

    @classmethod
    def case(cls, case_id):
        try:
            amp, freq, phase = CASES[int(case_id)]
        except (KeyError, ValueError):
            raise ConfigError(f"unknown trajectory case {case_id!r}; expected 1, 2 or 3") from None
        return cls(amp, freq, phase, int(case_id))

    @classmethod
    def custom(cls, amplitude, frequency, phase):
        return cls(amplitude, frequency, phase, None)

    @property
    def omega_max(self):
        """Largest per-axis amplitude."""
        return float(np.max(np.abs(self.amplitude)))

    def omega(self, t):
        """Rate at time(s) ``t``; shape (3,) for scalar ``t``, else (n, 3)."""
        t = np.asarray(t, dtype=float)
        arg = 2.0 * _PI * np.multiply.outer(t, self.frequency) + self.phase
        return self.amplitude * np.sin(arg)


def _as_case(case):
    return case if isinstance(case, TrajectoryCase) else TrajectoryCase.case(case)


def omega_profile(case, t):
    """Body angular rate of ``case`` (a :class:`TrajectoryCase` or 1, 2, 3) at ``t``."""
    if np.any(np.asarray(t) < 0):
        raise ConfigError("t must be non-negative")
    return _as_case(case).omega(t)


@dataclass(frozen=True)
class SimRun:
    """
    Simulation settings; the sample period ``dt`` overrides ``cfg.dt``.

    ``noise_units`` is ``"density"`` (default) or ``"per_sample"``; see the
    module docstring.
    """

    duration: float
    dt: float = 0.005
    seed: int = 0
    initial_q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    initial_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    cfg: NoiseConfig = field(default_factory=NoiseConfig)
    noise_units: str = "density"

    def __post_init__(self):
        if self.noise_units not in NOISE_UNITS:
            raise ConfigError(f"noise_units must be one of {NOISE_UNITS}, got {self.noise_units!r}")
        if not (self.dt > 0 and self.duration > self.dt):
            raise ConfigError(f"need duration > dt > 0, got duration={self.duration}, dt={self.dt}")
        q = np.array(self.initial_q, dtype=float).reshape(4)
        q /= np.linalg.norm(q)
        object.__setattr__(self, "initial_q", q)
        object.__setattr__(self, "initial_bias", np.array(self.initial_bias, dtype=float).reshape(3))
        if self.cfg.dt != self.dt:
            object.__setattr__(self, "cfg", self.cfg.replace(dt=self.dt))

    @property
    def n_steps(self):
        return int(round(self.duration / self.dt))

    @property
    def rate_noise_scale(self):
        """Factor turning ``Q`` into the per-sample rate-noise covariance."""
        return 1.0 / self.dt if self.noise_units == "density" else 1.0

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt

    def streams(self):
        """Independent generators for the bias walk and the sensor noise."""
        ss = np.random.SeedSequence(int(self.seed))
        return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(2)]


@dataclass(frozen=True)
class TruthRecord:
    t: float
    q_true: np.ndarray
    omega_true: np.ndarray
    bias_true: np.ndarray


@dataclass
class Truth:
    """Ground truth as arrays; indexing yields :class:`TruthRecord`."""

    t: np.ndarray
    q: np.ndarray
    omega: np.ndarray
    bias: np.ndarray

    def __len__(self):
        return len(self.t)

    def __getitem__(self, k):
        return TruthRecord(float(self.t[k]), self.q[k], self.omega[k], self.bias[k])


def _qmul_rows(p, q):
    a1, b1, c1, d1 = p.T
    a2, b2, c2, d2 = q.T
    return np.stack(
        [
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ],
        axis=-1,
    )


def rotmats(q):
    """Stack of rotation matrices for quaternion rows ``q`` (n, 4)."""
    a, b, c, d = np.asarray(q).T
    R = np.empty((len(a), 3, 3))
    R[:, 0, 0] = a * a + b * b - c * c - d * d
    R[:, 0, 1] = 2 * (b * c - a * d)
    R[:, 0, 2] = 2 * (b * d + a * c)
    R[:, 1, 0] = 2 * (b * c + a * d)
    R[:, 1, 1] = a * a - b * b + c * c - d * d
    R[:, 1, 2] = 2 * (c * d - a * b)
    R[:, 2, 0] = 2 * (b * d - a * c)
    R[:, 2, 1] = 2 * (c * d + a * b)
    R[:, 2, 2] = a * a - b * b - c * c + d * d
    return R


def rk4_attitude(q0, omega_fn, times):
    """RK4 integration of ``qdot = 1/2 q * omega(t)`` with renormalization."""
    times = np.asarray(times, dtype=float)
    h = np.diff(times)
    w_start = omega_fn(times).tolist()
    w_mid = omega_fn(times[:-1] + 0.5 * h).tolist()
    out = np.empty((len(times), 4))
    out[0] = q0
    a, b, c, d = (float(v) for v in q0)

    def f(a, b, c, d, w):
        x, y, z = w
        return (
            0.5 * (-b * x - c * y - d * z),
            0.5 * (a * x + c * z - d * y),
            0.5 * (a * y - b * z + d * x),
            0.5 * (a * z + b * y - c * x),
        )

    for k in range(1, len(times)):
        hk = h[k - 1]
        w0, wm, w1 = w_start[k - 1], w_mid[k - 1], w_start[k]
        k1 = f(a, b, c, d, w0)
        k2 = f(a + 0.5 * hk * k1[0], b + 0.5 * hk * k1[1], c + 0.5 * hk * k1[2], d + 0.5 * hk * k1[3], wm)
        k3 = f(a + 0.5 * hk * k2[0], b + 0.5 * hk * k2[1], c + 0.5 * hk * k2[2], d + 0.5 * hk * k2[3], wm)
        k4 = f(a + hk * k3[0], b + hk * k3[1], c + hk * k3[2], d + hk * k3[3], w1)
        s = hk / 6.0
        a += s * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        b += s * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        c += s * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        d += s * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        n = math.sqrt(a * a + b * b + c * c + d * d)
        if not (math.isfinite(n) and n > 0):
            raise NonFiniteState("truth integration produced a non-finite quaternion", t=float(times[k]))
        a, b, c, d = a / n, b / n, c / n, d / n
        out[k] = (a, b, c, d)
    return out


def increment_rates(q, times):
    """
    Body rates that reproduce each truth increment under the filters' Euler step.

    For ``dq = q[k-1]^-1 * q[k]`` (sign chosen with ``dq_0 > 0``) the rate
    ``2 dq_vec / (dq_0 dt)`` satisfies
    ``normalize(q[k-1] + dt/2 q[k-1] * (0, w)) = q[k]`` exactly. Row 0 is
    left for the caller.
    """
    conj = q[:-1] * np.array([1.0, -1.0, -1.0, -1.0])
    dq = _qmul_rows(conj, q[1:])
    dq *= np.sign(dq[:, :1])
    dt = np.diff(times)[:, None]
    return 2.0 * dq[:, 1:] / (dq[:, :1] * dt)


def _sqrtm_psd(cov):
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def _gaussian(rng, cov, n):
    z = rng.standard_normal((n, cov.shape[0]))
    return z @ _sqrtm_psd(cov).T


def integrate_truth(case, run):
    """
    Ground-truth attitude, rate and bias at ``run.times``.

    ``omega`` row ``k >= 1`` holds the rate reproducing the step
    ``k-1 -> k`` (see :func:`increment_rates`), which differs from the
    continuous profile by O(dt^2); row 0 is the profile at t = 0.
    """
    case = _as_case(case)
    t = run.times
    q = rk4_attitude(run.initial_q, case.omega, t)
    omega = np.empty((len(t), 3))
    omega[0] = case.omega(t[0])
    omega[1:] = increment_rates(q, t)
    rng_bias, _ = run.streams()
    steps = _gaussian(rng_bias, run.cfg.Q[3:, 3:] * run.rate_noise_scale, len(t) - 1) * run.dt
    bias = run.initial_bias + np.vstack([np.zeros((1, 3)), np.cumsum(steps, axis=0)])
    return Truth(t, q, omega, bias)


@dataclass
class SensorLog:
    """
    Sensor stream as arrays (one row per sample), optionally with truth.

    Indexing yields :class:`ImuSample`.
    """

    t: np.ndarray
    omega_m: np.ndarray
    y_a: np.ndarray
    y_b: np.ndarray
    truth: Truth | None = None

    def __len__(self):
        return len(self.t)

    def __getitem__(self, k):
        return ImuSample(float(self.t[k]), self.omega_m[k], self.y_a[k], self.y_b[k])

    def __iter__(self):
        return (self[k] for k in range(len(self)))


def synthesize_measurements(truth, run):
    """Noisy gyro, accelerometer and magnetometer streams for ``truth``."""
    if len(truth) == 0:
        raise ConfigError("truth is empty")
    cfg = run.cfg
    n = len(truth)
    _, rng = run.streams()
    Rt = np.transpose(rotmats(truth.q), (0, 2, 1))
    omega_m = truth.omega + truth.bias + _gaussian(rng, cfg.Q[:3, :3] * run.rate_noise_scale, n)
    y_a = -Rt @ cfg.g_e + _gaussian(rng, cfg.R[:3, :3], n)
    y_b = Rt @ cfg.b_e + _gaussian(rng, cfg.R[3:, 3:], n)
    return SensorLog(truth.t.copy(), omega_m, y_a, y_b, truth)


def simulate(case, run):
    """Truth plus synthesized measurements in one call."""
    return synthesize_measurements(integrate_truth(case, run), run)
