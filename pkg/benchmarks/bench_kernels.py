"""
Compiled versus pure-Python kernels.

Times the per-sample filter steps, the DARE solve and a full 30 s RINCF
run with each available backend and prints one row per workload.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from invahrs import _backend, riccati
from invahrs.filters import build_bank, run_filter
from invahrs.models import NoiseConfig
from invahrs.sim import SimRun, simulate


def _step_args(cfg, K):
    q = np.array([1.0, 0.0, 0.0, 0.0])
    b = np.zeros(3)
    wm = np.array([0.1, -0.2, 0.3])
    ya = np.array([0.1, 0.2, -9.8])
    yb = np.array([0.9, 0.1, 0.05])
    return q, b, wm, ya, yb, cfg.dt, cfg.g_e, cfg.b_e, K


def workloads(kern, cfg, K, sysd, log):
    q, b, wm, ya, yb, dt, ge, be, Km = _step_args(cfg, K)
    keep = np.ones((6, 6))
    E = np.empty(6)
    Ke = np.empty((6, 6))
    P = np.eye(6)
    Kout = np.empty((6, 6))

    def rincf():
        kern.rincf_step(q, b, wm, ya, yb, dt, ge, be, Km, 0.0, 0.0, keep, E, Ke)

    def riekf():
        P[:] = np.eye(6)
        kern.iekf_step(True, q, b, P, wm, ya, yb, dt, ge, be, cfg.Q, cfg.R, E, Kout)

    def ncf():
        kern.ncf_step(q, b, wm, ya, yb, dt, ge, be, 1.0, 0.1, 0.5, 0.5, E)

    def dare():
        Pd = np.eye(6)
        kern.dare_fixed_point(sysd.A_d, sysd.C, sysd.Q_d, sysd.R_d, Pd, 1e-12, 200_000)

    bank = build_bank(cfg, ["rincf"], report=riccati.tune(cfg))

    def run():
        s = bank["rincf"]
        s.backend = kern
        s.x_hat.q[:] = [1.0, 0.0, 0.0, 0.0]
        s.x_hat.omega_b[:] = 0.0
        run_filter(s, log)

    return [
        ("rincf_step", rincf, 20_000),
        ("riekf_step", riekf, 5_000),
        ("ncf_step", ncf, 20_000),
        ("dare_solve", dare, 3),
        ("rincf_run_30s", run, 2),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cfg = NoiseConfig()
    K = np.ascontiguousarray(riccati.tune(cfg).gain.K)
    sysd = riccati.build_discrete_system(cfg)
    log = simulate(1, SimRun(30.0, cfg.dt, seed=0))

    names = _backend.available()
    results = {}
    for name in names:
        kern = _backend.get(name)
        for label, fn, number in workloads(kern, cfg, K, sysd, log):
            best = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number
            results[(label, name)] = best

    labels = [w[0] for w in workloads(_backend.get(names[0]), cfg, K, sysd, log)]
    head = f"{'workload':<16}" + "".join(f"{n:>14}" for n in names)
    if len(names) > 1:
        head += f"{'speedup':>10}"
    print(head)
    for label in labels:
        cells = [results[(label, n)] for n in names]
        row = f"{label:<16}" + "".join(f"{_fmt(c):>14}" for c in cells)
        if len(names) > 1:
            row += f"{cells[-1] / cells[0]:>9.1f}x"
        print(row)


def _fmt(sec):
    if sec < 1e-3:
        return f"{sec * 1e6:.2f} us"
    if sec < 1.0:
        return f"{sec * 1e3:.2f} ms"
    return f"{sec:.2f} s"


if __name__ == "__main__":
    main()
