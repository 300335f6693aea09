"""
Property suites run by ``invahrs selftest``.

Each suite is a function ``suite(ctx) -> detail`` that raises
:class:`PropertyFailure` when its property does not hold. All random draws
come from fixed seeds, so a run is deterministic.

Mutation check
--------------
``run_selftest(mutation="right-error-transpose")`` swaps the right
output error for a deliberately broken copy that rotates with
``R_q_hat^T`` instead of ``R_q_hat``. The right-invariance suite must then
fail; this guards against a suite that passes vacuously.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _backend, riccati
from .errors import AhrsError
from .filters import init, run_filter
from .metrics import (
    attitude_error,
    invariant_errors,
    linearized_blocks,
    linearized_trajectory,
    lyapunov_series,
    structured_blocks,
)
from .models import (
    AttState,
    GroupElement,
    NoiseConfig,
    OutputError,
    apply_left_action,
    apply_right_action,
    compose_left,
    compose_right,
    output_error_left,
    output_error_right,
    predict_measurements,
)
from .sim import SensorLog, SimRun, TrajectoryCase, simulate
from .so3 import quat_exp, quat_mul, quat_to_rotmat, random_quat


class PropertyFailure(AssertionError):
    pass


def _mutant_right_error(q_hat, y, y_hat):
    e = output_error_left(y, y_hat)
    Rt = quat_to_rotmat(q_hat).T
    return OutputError(Rt @ e.e_g, Rt @ e.e_b)


MUTATIONS = {"right-error-transpose": {"right_error": _mutant_right_error}}


@dataclass
class Context:
    cfg: NoiseConfig
    right_error: object = output_error_right
    seed: int = 20240601
    extra: dict = field(default_factory=dict)

    def rng(self, salt):
        return np.random.default_rng([self.seed, salt])


@dataclass
class SuiteResult:
    name: str
    ok: bool
    detail: str
    seconds: float

    def line(self):
        status = "PASS" if self.ok else "FAIL"
        return f"{status} {self.name}: {self.detail} ({self.seconds:.2f} s)"


def _check(cond, msg):
    if not cond:
        raise PropertyFailure(msg)


def random_element(rng, bias_scale=0.1):
    return GroupElement(random_quat(rng), bias_scale * rng.standard_normal(3))


def _random_setup(rng, cfg):
    x = AttState(random_quat(rng), 0.05 * rng.standard_normal(3))
    q_true = random_quat(rng)
    y = predict_measurements(q_true, cfg)
    u = rng.standard_normal(3)
    return x, u, y


def suite_noise_config(ctx):
    """Q and R symmetric PSD, references non-zero (validated on construction)."""
    cfg = ctx.cfg
    lo_q = float(np.linalg.eigvalsh(cfg.Q).min())
    lo_r = float(np.linalg.eigvalsh(cfg.R).min())
    return f"min eig Q {lo_q:.3g}, R {lo_r:.3g}"


def suite_so3(ctx):
    """Quaternion product is associative and ``R_q`` is a proper rotation."""
    rng = ctx.rng(1)
    worst = 0.0
    for _ in range(100):
        p, q, r = (random_quat(rng) for _ in range(3))
        worst = max(worst, np.abs(quat_mul(quat_mul(p, q), r) - quat_mul(p, quat_mul(q, r))).max())
        R = quat_to_rotmat(q)
        worst = max(worst, np.abs(R @ R.T - np.eye(3)).max(), abs(np.linalg.det(R) - 1.0))
        worst = max(worst, np.abs(quat_to_rotmat(quat_mul(p, q)) - quat_to_rotmat(p) @ R).max())
    _check(worst <= 1e-12, f"algebra error {worst:.3e} > 1e-12")
    return f"max error {worst:.2e}"


def suite_left_invariance(ctx):
    """The body-frame error is unchanged by the left action."""
    rng = ctx.rng(2)
    worst = 0.0
    for _ in range(100):
        x, u, y = _random_setup(rng, ctx.cfg)
        g = random_element(rng)
        e0 = output_error_left(y, predict_measurements(x.q, ctx.cfg)).stacked
        x2, _, cfg2, y2 = apply_left_action(g, x, u, ctx.cfg, y)
        e1 = output_error_left(y2, predict_measurements(x2.q, cfg2)).stacked
        worst = max(worst, np.abs(e1 - e0).max())
    _check(worst <= 1e-9, f"left error changed by {worst:.3e} > 1e-9")
    return f"100 elements, max change {worst:.2e}"


def suite_right_invariance(ctx):
    """The earth-frame error is unchanged by the right action."""
    rng = ctx.rng(3)
    worst = 0.0
    err = ctx.right_error
    for _ in range(100):
        x, u, y = _random_setup(rng, ctx.cfg)
        g = random_element(rng)
        e0 = err(x.q, y, predict_measurements(x.q, ctx.cfg)).stacked
        x2, _, cfg2, y2 = apply_right_action(g, x, u, ctx.cfg, y)
        e1 = err(x2.q, y2, predict_measurements(x2.q, cfg2)).stacked
        worst = max(worst, np.abs(e1 - e0).max())
    _check(worst <= 1e-9, f"right error changed by {worst:.3e} > 1e-9")
    return f"100 elements, max change {worst:.2e}"


def _state_close(a, b):
    # q and -q are the same attitude
    dq = min(np.abs(a.q - b.q).max(), np.abs(a.q + b.q).max())
    return max(dq, np.abs(a.omega_b - b.omega_b).max())


def suite_composition(ctx):
    """Acting with ``g2`` then ``g1`` equals acting with the composed element."""
    rng = ctx.rng(4)
    worst = 0.0
    for _ in range(100):
        x, u, y = _random_setup(rng, ctx.cfg)
        g1, g2 = random_element(rng), random_element(rng)
        for act, comp in ((apply_left_action, compose_left), (apply_right_action, compose_right)):
            x1, u1, c1, y1 = act(g2, x, u, ctx.cfg, y)
            xa, ua, _, _ = act(g1, x1, u1, c1, y1)
            xb, ub, _, _ = act(comp(g1, g2), x, u, ctx.cfg, y)
            worst = max(worst, _state_close(xa, xb), np.abs(np.asarray(ua) - np.asarray(ub)).max())
    _check(worst <= 1e-12, f"composition mismatch {worst:.3e} > 1e-12")
    return f"max mismatch {worst:.2e}"


def suite_dare_oracles(ctx):
    """Scalar closed form and the plain recursion agree with the DARE solver."""
    sys1 = riccati.DiscreteSystem(np.eye(1), np.eye(1), np.eye(1), np.eye(1))
    P, K = riccati.solve_dare(sys1)
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    _check(abs(P[0, 0] - phi) <= 1e-10, f"scalar P {P[0, 0]!r} != golden ratio")
    _check(abs(K[0, 0] - 1.0 / phi) <= 1e-10, f"scalar K {K[0, 0]!r} != 1/golden ratio")
    rng = ctx.rng(5)
    worst = 0.0
    for _ in range(3):
        cfg = ctx.cfg.replace(
            Q=np.diag(np.diag(ctx.cfg.Q) * rng.uniform(0.5, 2.0, 6)),
            R=np.diag(np.diag(ctx.cfg.R) * rng.uniform(0.5, 2.0, 6)),
        )
        sysd = riccati.build_discrete_system(cfg)
        Pr, Kr = riccati.riccati_recursion(sysd, np.eye(6), 100_000)
        Ps, Ks = riccati.solve_dare(sysd)
        worst = max(worst, np.abs(Pr - Ps).max(), np.abs(Kr - Ks).max())
    _check(worst <= 1e-8, f"DARE vs recursion {worst:.3e} > 1e-8")
    return f"golden ratio ok, recursion mismatch {worst:.2e}"


def suite_structured_blocks(ctx):
    """Linearized error blocks of the DARE gain match the diagonal formula."""
    rep = riccati.tune(ctx.cfg)
    a = linearized_blocks(rep.gain, ctx.cfg)
    b = structured_blocks(rep.structured, ctx.cfg)
    if not (np.allclose(ctx.cfg.g_e[:2], 0) and np.allclose(ctx.cfg.b_e[1:], 0)):
        return "skipped: references not aligned with e3 / e1"
    diff = max(np.abs(a[0] - b[0]).max(), np.abs(a[1] - b[1]).max())
    _check(diff <= 1e-12, f"block mismatch {diff:.3e} > 1e-12")
    params = rep.structured.as_dict()
    pos = all(params[k] > 0 for k in riccati.REFERENCE_GAINS)
    _check(pos, "structured gains are not all positive")
    return f"block mismatch {diff:.2e}, all eight parameters positive"


def _still_log(cfg, duration):
    nl = cfg.replace(Q=np.zeros((6, 6)), R=np.zeros((6, 6)))
    still = TrajectoryCase.custom((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    return simulate(still, SimRun(duration, cfg.dt, cfg=nl))


def suite_lyapunov(ctx):
    """V is non-increasing along small-error RINCF runs and the linearized model."""
    rep = riccati.tune(ctx.cfg)
    A_mu, A_beta = structured_blocks(rep.structured, ctx.cfg)
    rng = ctx.rng(6)
    log = _still_log(ctx.cfg, 10.0)
    worst = -math.inf
    for _ in range(5):
        dmu = 1e-3 * rng.uniform(-1, 1, 3)
        dbeta = 1e-3 * rng.uniform(-1, 1, 3)
        _, mu, beta = linearized_trajectory(A_mu, A_beta, dmu, dbeta, 5.0, h=5e-3)
        worst = max(worst, np.diff(lyapunov_series(mu, beta, A_beta)).max())
        q0 = quat_mul(quat_exp(2.0 * dmu), log.truth.q[0])
        s = init("rincf", ctx.cfg, rep.gain, x0=AttState(q0, dbeta))
        run = run_filter(s, log)
        mu, beta = invariant_errors(log.truth.q, log.truth.bias, run.q, run.bias)
        worst = max(worst, np.diff(lyapunov_series(mu, beta, A_beta)).max())
    _check(worst <= 1e-9, f"V increased by {worst:.3e} > 1e-9")
    return f"max step change of V {worst:.2e}"


def convergence_trials(cfg, gain, n_trials, rng, duration=40.0, max_angle=math.radians(15), max_bias=0.05):
    """
    RINCF local-convergence trials on a still, noiseless platform.

    Returns ``(worst_ratio, max_angle_seen)`` where ``worst_ratio`` is the
    largest final/initial ratio of the attitude and bias error norms.
    """
    log = _still_log(cfg, duration)
    worst = 0.0
    peak = 0.0
    for _ in range(n_trials):
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        ang = max_angle * rng.uniform(0.01, 1.0)
        q0 = quat_mul(quat_exp(axis * ang), log.truth.q[0])
        b0 = rng.uniform(-max_bias, max_bias, 3)
        run = run_filter(init("rincf", cfg, gain, x0=AttState(q0, b0)), log)
        mu, beta = invariant_errors(log.truth.q, log.truth.bias, run.q, run.bias)
        em = np.linalg.norm(mu, axis=1)
        eb = np.linalg.norm(beta, axis=1)
        if not (np.all(np.isfinite(em)) and np.all(np.isfinite(eb))):
            return math.inf, math.inf
        worst = max(worst, em[-1] / em[0], eb[-1] / eb[0])
        peak = max(peak, 2.0 * float(np.arcsin(np.clip(em, 0.0, 1.0)).max()))
    return worst, peak


def suite_convergence(ctx):
    """RINCF errors from random starts up to 15 deg shrink by 1e-4 (10 trials)."""
    rep = riccati.tune(ctx.cfg)
    worst, peak = convergence_trials(ctx.cfg, rep.gain, 10, ctx.rng(7))
    _check(worst <= 1e-4, f"error ratio {worst:.3e} > 1e-4")
    _check(peak < math.pi / 2, f"error grew to {math.degrees(peak):.1f} deg")
    return f"worst final/initial ratio {worst:.2e}"


def suite_filter_right_invariance(ctx):
    """RINCF estimates transform with the right action of inputs and initial state."""
    rep = riccati.tune(ctx.cfg)
    rng = ctx.rng(8)
    log = simulate(1, SimRun(2.0, ctx.cfg.dt, seed=3, cfg=ctx.cfg))
    g = random_element(rng)
    R0t = quat_to_rotmat(g.q0).T
    moved = SensorLog(
        log.t, log.omega_m @ R0t.T + g.omega_b0, log.y_a @ R0t.T, log.y_b @ R0t.T, None
    )
    x0 = AttState(random_quat(rng), 0.01 * rng.standard_normal(3))
    x0m = AttState(quat_mul(x0.q, g.q0), R0t @ x0.omega_b + g.omega_b0)
    a = run_filter(init("rincf", ctx.cfg, rep.gain, x0=x0), log)
    b = run_filter(init("rincf", ctx.cfg, rep.gain, x0=x0m), moved)
    qa = np.array([quat_mul(q, g.q0) for q in a.q])
    ba = a.bias @ R0t.T + g.omega_b0
    dq = np.minimum(np.abs(qa - b.q).max(axis=1), np.abs(qa + b.q).max(axis=1)).max()
    worst = max(dq, np.abs(ba - b.bias).max())
    _check(worst <= 1e-8, f"trajectory mismatch {worst:.3e} > 1e-8")
    return f"max mismatch {worst:.2e}"


def suite_error_metric(ctx):
    """``attitude_error`` is right-invariant and blind to the quaternion sign."""
    rng = ctx.rng(9)
    worst = 0.0
    for _ in range(100):
        q, qh, q0 = (random_quat(rng) for _ in range(3))
        e0, a0 = attitude_error(q, qh)
        e1, a1 = attitude_error(quat_mul(q, q0), quat_mul(qh, q0))
        e2, a2 = attitude_error(q, -qh)
        worst = max(worst, abs(a1 - a0), abs(a2 - a0), np.abs(e2 - e0).max())
        if abs(e0[1]) < 1.5:  # away from gimbal lock the Euler triplet is unique
            worst = max(worst, np.abs(e1 - e0).max())
    _check(worst <= 1e-12, f"metric changed by {worst:.3e}")
    return f"max change {worst:.2e}"


def suite_backends(ctx):
    """Compiled and pure-Python kernels give the same RINCF and RIEKF* runs."""
    if "cython" not in _backend.available():
        return "skipped: compiled kernels not built"
    rep = riccati.tune(ctx.cfg)
    log = simulate(1, SimRun(2.0, ctx.cfg.dt, seed=5, cfg=ctx.cfg))
    worst = 0.0
    for kind, gains in (("rincf", rep.gain), ("riekf_star", None)):
        runs = [run_filter(init(kind, ctx.cfg, gains, backend=b), log) for b in ("cython", "python")]
        worst = max(worst, np.abs(runs[0].q - runs[1].q).max(), np.abs(runs[0].bias - runs[1].bias).max())
    _check(worst <= 1e-10, f"backend mismatch {worst:.3e} > 1e-10")
    return f"max mismatch {worst:.2e}"


SUITES = (
    ("noise_config", suite_noise_config),
    ("so3_algebra", suite_so3),
    ("left_invariance", suite_left_invariance),
    ("right_invariance", suite_right_invariance),
    ("action_composition", suite_composition),
    ("dare_oracles", suite_dare_oracles),
    ("structured_blocks", suite_structured_blocks),
    ("lyapunov", suite_lyapunov),
    ("rincf_convergence", suite_convergence),
    ("rincf_right_invariance", suite_filter_right_invariance),
    ("error_metric", suite_error_metric),
    ("backend_equivalence", suite_backends),
)


def run_selftest(cfg=None, mutation=None, only=None):
    """
    Run the suites; returns a list of :class:`SuiteResult`.

    ``only`` restricts the run to the named suites.
    """
    cfg = NoiseConfig() if cfg is None else cfg
    ctx = Context(cfg)
    if mutation is not None:
        try:
            overrides = MUTATIONS[mutation]
        except KeyError:
            raise ValueError(f"unknown mutation {mutation!r}; choose from {', '.join(MUTATIONS)}") from None
        for k, v in overrides.items():
            setattr(ctx, k, v)
    out = []
    for name, fn in SUITES:
        if only and name not in only:
            continue
        t0 = time.perf_counter()
        try:
            detail = fn(ctx)
            ok = True
        except (PropertyFailure, AhrsError, np.linalg.LinAlgError) as exc:
            ok, detail = False, str(exc)
        out.append(SuiteResult(name, ok, detail, time.perf_counter() - t0))
    return out
