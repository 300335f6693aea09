"""
Command-line front end.

Subcommands: ``tune``, ``simulate``, ``run``, ``compare`` and ``selftest``.
Exit codes: 0 success, 1 self-test failure, 2 configuration or input
error (including a non-converging Riccati iteration), 3 numerical failure
while filtering.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__, riccati
from ._backend import BACKEND
from .config import load_config
from .errors import (
    AhrsError,
    ConfigError,
    DegenerateGeometry,
    EmptyWindow,
    IndexOutOfRange,
    InvalidGains,
    LogFormatError,
    MissingGains,
    NoConvergence,
    NonFiniteState,
    SingularInnovation,
    SingularN,
)
from .filters import FilterKind, build_bank, run_filter
from .logio import read_log, write_estimates, write_gain_trace, write_log
from .metrics import comparison_csv, comparison_text, compare, error_series, summarize
from .models import AttState
from .selftest import MUTATIONS, SUITES, run_selftest
from .sim import simulate

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_CONFIG_ERRORS = (
    ConfigError, LogFormatError, NoConvergence, SingularN, MissingGains,
    InvalidGains, IndexOutOfRange, EmptyWindow, DegenerateGeometry,
)  # fmt: skip
_NUMERIC_ERRORS = (NonFiniteState, SingularInnovation)


def _settings_from_args(args):
    """Config overrides implied by explicit flags (these beat file and environment)."""
    out = list(getattr(args, "set", None) or [])
    for flag, key in (
        ("case", "case"), ("duration", "duration"), ("dt", "dt"), ("seed", "seed"),
        ("noise_units", "noise_units"), ("window", "window"), ("gains", "gains"),
        ("mask", "mask"), ("convention", "convention"),
    ):  # fmt: skip
        v = getattr(args, flag, None)
        if v is not None:
            out.append(f"{key}={v}")
    if getattr(args, "omega_max", None):
        out.append("omega_max=" + ",".join(str(w) for w in args.omega_max))
    if getattr(args, "noiseless", False):
        out.append("noiseless=true")
    if getattr(args, "filters", None):
        out.append("filters=" + args.filters)
    return out


def _config(args):
    return load_config(args.config, _settings_from_args(args))


def _fmt_matrix(K):
    return "\n".join("  " + " ".join(f"{v: .6e}" for v in row) for row in np.asarray(K))


def report_text(rep):
    lines = ["K ="]
    lines.append(_fmt_matrix(rep.gain.K))
    if rep.gain.mask:
        lines.append("mask (row:col): " + ", ".join(f"{r}:{c}" for r, c in sorted(rep.gain.mask)))
    params = rep.structured.as_dict()
    lines.append("structured parameters:")
    lines.append("  " + "  ".join(f"{k}={params[k]:.6e}" for k in riccati.REFERENCE_GAINS))
    lines.append(f"  off-diagonal residual (relative) = {rep.structured.relative_offdiag:.3e}")
    for p in rep.rincf2:
        lines.append(f"omega_max={p.omega_max:.6g} rad/s: p1={p.p1:.6e} p2={p.p2:.6e}")
    lines.append(f"DARE residual = {rep.residual:.3e} after {rep.iters} iterations")
    return "\n".join(lines) + "\n"


def cmd_tune(args, out):
    rc = _config(args)
    rep = riccati.tune(rc.noise, mask=rc.mask, omega_max=rc.omega_max, convention=rc.convention)
    doc = rep.to_json_dict()
    if args.json == "-":
        out.write(json.dumps(doc, indent=2) + "\n")
        return EXIT_OK
    out.write(report_text(rep))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def cmd_simulate(args, out):
    rc = _config(args)
    log = simulate(rc.trajectory_case(), rc.sim_run())
    write_log(args.out if args.out and args.out != "-" else out, log, truth=not args.no_truth)
    return EXIT_OK


def _load_input(args, rc):
    if getattr(args, "input", None):
        return read_log(args.input)
    return simulate(rc.trajectory_case(), rc.sim_run())


def _gain_report(rc, kinds):
    if not any(k in (FilterKind.RINCF, FilterKind.RINCF2) for k in kinds):
        return None
    if rc.gains:
        try:
            with open(rc.gains, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load gains from {rc.gains}: {exc}") from None
        gain, rates = riccati.gains_from_json(doc)
        if rc.mask:
            gain = gain.with_mask(rc.mask)
        if FilterKind.RINCF2 in kinds and not rates:
            rates = [riccati.compute_rincf2_params(rc.noise, rc.rincf2_rate(), rc.convention)]
        rep = riccati.GainReport(gain, riccati.extract_structured_gains(gain.K), float("nan"), 0, None, rates)
        return rep
    omega = [rc.rincf2_rate()] if FilterKind.RINCF2 in kinds else []
    return riccati.tune(rc.noise, mask=rc.mask, omega_max=omega, convention=rc.convention)


def _initial_state(args, log):
    if not args.perfect_init:
        return None
    if log.truth is None:
        raise ConfigError("--perfect-init needs truth columns in the log")
    return AttState(np.array(log.truth.q[0]), np.array(log.truth.bias[0]))


def _bank(rc, kinds, log, args):
    rep = _gain_report(rc, kinds)
    return build_bank(rc.noise, kinds, report=rep, ncf_gains=rc.ncf, x0=_initial_state(args, log))


def cmd_run(args, out, err):
    rc = _config(args)
    kind = FilterKind.parse(args.filter)
    log = _load_input(args, rc)
    s = _bank(rc, [kind], log, args)[kind.value]
    run = run_filter(s, log)
    write_estimates(args.out if args.out and args.out != "-" else out, run)
    if args.gain_out and len(run.gain_t):
        write_gain_trace(args.gain_out, run)
    if log.truth is not None:
        st = summarize(error_series(log.t, log.truth.q, run.q), min(rc.window, float(log.t[-1])))
        err.write(f"{kind.value}: total-angle RMS after {st.window_start:g} s = {np.degrees(st.rms_angle):.4f} deg\n")
    return EXIT_OK


def cmd_compare(args, out):
    rc = _config(args)
    kinds = [FilterKind.parse(k) for k in rc.filters]
    if len(kinds) < 2:
        raise ConfigError("compare needs at least two filters")
    log = _load_input(args, rc)
    bank = _bank(rc, kinds, log, args)
    rows, _ = compare(log, bank, rc.window, timing=args.timing, n_steps=args.timing_steps)
    out.write(comparison_text(rows))
    if args.csv:
        with open(args.csv, "w", encoding="ascii", newline="") as fh:
            fh.write(comparison_csv(rows))
    return EXIT_OK


def cmd_selftest(args, out):
    try:
        rc = _config(args)
    except ConfigError as exc:
        out.write(f"FAIL noise_config: {exc}\n")
        return EXIT_SELFTEST
    only = set(args.only.split(",")) if args.only else None
    results = run_selftest(rc.noise, mutation=args.mutation, only=only)
    for r in results:
        out.write(r.line() + "\n")
    failed = [r.name for r in results if not r.ok]
    out.write(f"{len(results) - len(failed)}/{len(results)} suites passed (kernels: {BACKEND})\n")
    return EXIT_SELFTEST if failed else EXIT_OK


def _common(p):
    p.add_argument("--config", metavar="FILE", help="key = value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one configuration key")
    p.add_argument("--seed", type=int, help="RNG seed (overrides AHRS_SEED and the config file)")


def _source(p):
    p.add_argument("--input", metavar="CSV", help="sensor log to replay (default: simulate)")
    p.add_argument("--case", type=int, choices=(1, 2, 3), help="trajectory to simulate when no input is given")
    p.add_argument("--duration", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--noiseless", action="store_true", help="simulate without sensor noise")
    p.add_argument("--noise-units", dest="noise_units", choices=("density", "per_sample"))
    p.add_argument("--gains", metavar="JSON", help="gain report written by 'tune --json'")
    p.add_argument("--mask", help="gain mask, e.g. '3:3, 1:4'")
    p.add_argument("--omega-max", dest="omega_max", type=float, nargs="+", help="rate for the RINCF2 terms")
    p.add_argument("--convention", choices=tuple(riccati.P_INDEX_CONVENTIONS))
    p.add_argument("--window", type=float, help="convergence window start [s]")
    p.add_argument("--perfect-init", dest="perfect_init", action="store_true",
                   help="start every filter at the true state (testing)")  # fmt: skip


def build_parser():
    ap = argparse.ArgumentParser(prog="invahrs", description="Invariant attitude filters and gain synthesis.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tune", help="steady-state gains from the Riccati equation")
    _common(p)
    p.add_argument("--dt", type=float)
    p.add_argument("--mask", help="gain mask, e.g. '3:3, 1:4'")
    p.add_argument("--omega-max", dest="omega_max", type=float, nargs="+", help="rates for the RINCF2 terms")
    p.add_argument("--convention", choices=tuple(riccati.P_INDEX_CONVENTIONS))
    p.add_argument("--json", metavar="PATH", help="write the JSON report ('-' prints only JSON)")

    p = sub.add_parser("simulate", help="write a synthetic sensor log with truth")
    _common(p)
    p.add_argument("--case", type=int, choices=(1, 2, 3))
    p.add_argument("--duration", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--noiseless", action="store_true")
    p.add_argument("--noise-units", dest="noise_units", choices=("density", "per_sample"))
    p.add_argument("--no-truth", dest="no_truth", action="store_true", help="omit the truth columns")
    p.add_argument("--out", metavar="CSV", help="output file (default stdout)")

    p = sub.add_parser("run", help="run one filter over a log")
    _common(p)
    _source(p)
    p.add_argument("--filter", required=True, help=", ".join(k.value for k in FilterKind))
    p.add_argument("--out", metavar="CSV", help="estimates file (default stdout)")
    p.add_argument("--gain-out", dest="gain_out", metavar="CSV", help="gain trace of adaptive filters")

    p = sub.add_parser("compare", help="error statistics of several filters on one log")
    _common(p)
    _source(p)
    p.add_argument("--filters", help="comma list (default: all)")
    p.add_argument("--timing", action="store_true", help="also measure the median step time")
    p.add_argument("--timing-steps", dest="timing_steps", type=int, default=10_000)
    p.add_argument("--csv", metavar="PATH", help="also write the table as CSV")

    p = sub.add_parser("selftest", help="run the property suites")
    _common(p)
    p.add_argument("--mutation", choices=tuple(MUTATIONS), help="inject a known defect (must fail)")
    p.add_argument("--only", help="comma list of suites: " + ", ".join(n for n, _ in SUITES))
    return ap


def main(argv=None, out=None, err=None):
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    args = build_parser().parse_args(argv)
    try:
        if args.command == "tune":
            return cmd_tune(args, out)
        if args.command == "simulate":
            return cmd_simulate(args, out)
        if args.command == "run":
            return cmd_run(args, out, err)
        if args.command == "compare":
            return cmd_compare(args, out)
        return cmd_selftest(args, out)
    except _CONFIG_ERRORS as exc:
        err.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except ValueError as exc:
        # e.g. an unknown filter name
        err.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        err.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except AhrsError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_CONFIG
