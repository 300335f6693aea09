"""
Flat ``key = value`` configuration files for the command-line tools.

Lines are ``key = value`` with ``#`` starting a comment. Matrices are
row-major comma lists with 1 value (scaled identity), n values (diagonal)
or n*n values (full). Masks are ``mask = 3:3, 1:4`` (1-based row:col).

Recognized keys
---------------
Q, R                  noise covariances (6x6)
g_e, b_e              earth-frame references (3 values)
dt, duration, seed    sampling period [s], length [s], RNG seed
case                  built-in trajectory 1, 2 or 3
amplitude, frequency, phase
                      custom sinusoidal profile (3 values each, replaces case)
noise_units           ``density`` (default) or ``per_sample``
noiseless             ``true``: simulate without noise (filters keep Q, R)
initial_q, initial_bias
                      truth initial state
filters               comma list of filter names
gains                 path to a JSON gain report from ``tune``
mask                  gain mask
omega_max             comma list of rates [rad/s] for the RINCF2 terms
convention            ``row_col`` or ``col_row`` (RINCF2 source entries)
window                convergence window start [s]
k_p, k_i, k_1, k_2    complementary-filter gains
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .filters import ALL_KINDS, FilterKind, NcfGains
from .metrics import DEFAULT_WINDOW
from .models import NoiseConfig
from .sim import NOISE_UNITS, SimRun, TrajectoryCase

SEED_ENV = "AHRS_SEED"


def parse_numbers(text, key=None):
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{key or 'value'}: expected numbers, got {text!r}") from None


def parse_matrix(text, n, key=None):
    """``n x n`` matrix from 1, n or n*n comma-separated values."""
    v = parse_numbers(text, key)
    if len(v) == 1:
        return v[0] * np.eye(n)
    if len(v) == n:
        return np.diag(v)
    if len(v) == n * n:
        return np.array(v).reshape(n, n)
    raise ConfigError(f"{key or 'matrix'}: expected 1, {n} or {n * n} values, got {len(v)}")


def parse_vector(text, n, key=None):
    v = parse_numbers(text, key)
    if len(v) != n:
        raise ConfigError(f"{key or 'vector'}: expected {n} values, got {len(v)}")
    return np.array(v)


def parse_mask(text):
    """``"3:3, 1:4"`` -> ``frozenset({(3, 3), (1, 4)})``."""
    out = set()
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            r, c = (int(x) for x in item.split(":"))
        except ValueError:
            raise ConfigError(f"mask entry {item!r} is not row:col") from None
        out.add((r, c))
    return frozenset(out)


def parse_bool(text, key=None):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key or 'flag'}: expected true/false, got {text!r}")


@dataclass
class RunConfig:
    """Everything the subcommands need, with defaults for every field."""

    noise: NoiseConfig = field(default_factory=NoiseConfig)
    case: int = 1
    trajectory: TrajectoryCase | None = None
    duration: float = 30.0
    seed: int = 0
    noise_units: str = "density"
    noiseless: bool = False
    initial_q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    initial_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    filters: tuple = tuple(k.value for k in ALL_KINDS)
    gains: str | None = None
    mask: frozenset = frozenset()
    omega_max: tuple = ()
    convention: str = "row_col"
    window: float = DEFAULT_WINDOW
    ncf: NcfGains = field(default_factory=NcfGains)

    @property
    def dt(self):
        return self.noise.dt

    def trajectory_case(self):
        return self.trajectory if self.trajectory is not None else TrajectoryCase.case(self.case)

    def sim_run(self):
        cfg = self.noise
        if self.noiseless:
            cfg = cfg.replace(Q=np.zeros((6, 6)), R=np.zeros((6, 6)))
        return SimRun(
            self.duration, cfg.dt, self.seed, self.initial_q, self.initial_bias, cfg, self.noise_units
        )

    def rincf2_rate(self):
        """Rate for the RINCF2 terms: first ``omega_max`` entry or the profile's largest amplitude."""
        if self.omega_max:
            return float(self.omega_max[0])
        return self.trajectory_case().omega_max or float(np.pi / 3)


def apply_settings(rc, settings):
    """
    New :class:`RunConfig` with ``settings`` (key -> text) applied.

    Unknown keys raise :class:`ConfigError`; noise settings are validated
    together once all of them are applied.
    """
    noise = {}
    upd = {}
    traj = {}
    ncf = {}
    for key, text in settings.items():
        if key in ("Q", "R"):
            noise[key] = parse_matrix(text, 6, key)
        elif key in ("g_e", "b_e"):
            noise[key] = parse_vector(text, 3, key)
        elif key == "dt":
            noise["dt"] = _scalar(text, key)
        elif key == "duration":
            upd["duration"] = _scalar(text, key)
        elif key == "window":
            upd["window"] = _scalar(text, key)
        elif key == "seed":
            upd["seed"] = _int(text, key)
        elif key == "case":
            upd["case"] = _int(text, key)
        elif key in ("amplitude", "frequency", "phase"):
            traj[key] = parse_vector(text, 3, key)
        elif key == "noise_units":
            if text.strip() not in NOISE_UNITS:
                raise ConfigError(f"noise_units must be one of {NOISE_UNITS}, got {text!r}")
            upd["noise_units"] = text.strip()
        elif key == "noiseless":
            upd["noiseless"] = parse_bool(text, key)
        elif key == "initial_q":
            upd["initial_q"] = parse_vector(text, 4, key)
        elif key == "initial_bias":
            upd["initial_bias"] = parse_vector(text, 3, key)
        elif key == "filters":
            try:
                upd["filters"] = tuple(FilterKind.parse(f).value for f in text.split(",") if f.strip())
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        elif key == "gains":
            upd["gains"] = text.strip() or None
        elif key == "mask":
            upd["mask"] = parse_mask(text)
        elif key == "omega_max":
            upd["omega_max"] = tuple(parse_numbers(text, key))
        elif key == "convention":
            upd["convention"] = text.strip()
        elif key in ("k_p", "k_i", "k_1", "k_2"):
            ncf[key] = _scalar(text, key)
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    if noise:
        upd["noise"] = rc.noise.replace(**noise)
    if traj:
        base = rc.trajectory_case()
        upd["trajectory"] = TrajectoryCase.custom(
            traj.get("amplitude", base.amplitude),
            traj.get("frequency", base.frequency),
            traj.get("phase", base.phase),
        )
    elif "case" in upd:
        TrajectoryCase.case(upd["case"])  # validate early
        upd["trajectory"] = None
    if ncf:
        upd["ncf"] = replace(rc.ncf, **ncf)
    return replace(rc, **upd)


def _scalar(text, key):
    v = parse_numbers(text, key)
    if len(v) != 1:
        raise ConfigError(f"{key}: expected one number, got {text!r}")
    return v[0]


def _int(text, key):
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def parse_config_text(text, source="<config>"):
    """``key -> value text`` from file contents; later keys win."""
    out = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{i}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{i}: empty key")
        out[key] = value
    return out


def load_config(path=None, overrides=(), env=None):
    """
    Build a :class:`RunConfig` from an optional file plus ``key=value`` overrides.

    The seed comes from, in increasing precedence: the default, the file,
    the ``AHRS_SEED`` environment variable, then an explicit override.
    """
    env = os.environ if env is None else env
    settings = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        settings.update(parse_config_text(text, str(path)))
    if env.get(SEED_ENV, "").strip():
        settings["seed"] = env[SEED_ENV]
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        settings[k.strip()] = v
    return apply_settings(RunConfig(), settings)
