"""
CSV sensor logs and estimate files.

A log has the mandatory header ``t,wx,wy,wz,ax,ay,az,mx,my,mz`` optionally
followed by the truth columns ``qw,qx,qy,qz,bwx,bwy,bwz``. Numbers are
written with ``repr`` (shortest round-trip decimal form), so reading a file
back reproduces the arrays bit for bit.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, LogFormatError
from .sim import SensorLog, Truth

LOG_COLUMNS = ("t", "wx", "wy", "wz", "ax", "ay", "az", "mx", "my", "mz")
TRUTH_COLUMNS = ("qw", "qx", "qy", "qz", "bwx", "bwy", "bwz")
ESTIMATE_COLUMNS = (
    "t", "qw", "qx", "qy", "qz", "roll", "pitch", "yaw",
    "bwx", "bwy", "bwz", "eg1", "eg2", "eg3", "eb1", "eb2", "eb3",
)  # fmt: skip
GAIN_COLUMNS = ("t",) + tuple(f"k{r}{c}" for r in range(1, 7) for c in range(1, 7))


def _row(values):
    return ",".join(repr(float(v)) for v in values)


def write_table(path, header, rows):
    """Write ``rows`` (2-D array) under ``header``; ``path`` may be a text stream."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != len(header):
        raise ConfigError(f"expected {len(header)} columns, got array of shape {rows.shape}")
    lines = [",".join(header)] + [_row(r) for r in rows]
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w", encoding="ascii", newline="") as fh:
            fh.write(text)


def write_log(path, log, truth=True):
    """Write a :class:`~invahrs.sim.SensorLog`; truth columns only if present and requested."""
    cols = [np.asarray(log.t)[:, None], log.omega_m, log.y_a, log.y_b]
    header = LOG_COLUMNS
    if truth and log.truth is not None:
        cols += [log.truth.q, log.truth.bias]
        header = LOG_COLUMNS + TRUTH_COLUMNS
    write_table(path, header, np.hstack(cols))


def _parse_float(text, line, col):
    try:
        v = float(text)
    except ValueError:
        raise LogFormatError(f"column {col!r}: cannot parse {text!r} as a number", line) from None
    if not math.isfinite(v):
        raise LogFormatError(f"column {col!r}: non-finite value {text!r}", line)
    return v


def read_log(path):
    """
    Parse a log file into a :class:`~invahrs.sim.SensorLog`.

    Truth columns, when present, populate ``log.truth`` (the truth rate is
    not stored and is left as NaN). Blank lines are skipped.

    Raises
    ------
    LogFormatError
        Wrong header, short or long rows, unparsable or non-finite numbers,
        or a time stamp that does not increase. The message names the
        1-based line number (the header is line 1).
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise LogFormatError("empty file", 1)
    header = tuple(h.strip() for h in lines[0].split(","))
    if header not in (LOG_COLUMNS, LOG_COLUMNS + TRUTH_COLUMNS):
        raise LogFormatError(f"unexpected header {','.join(header)!r}; expected {','.join(LOG_COLUMNS)!r} "
                             "optionally followed by the truth columns", 1)  # fmt: skip
    ncol = len(header)
    rows = []
    prev_t = -math.inf
    for i, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        cells = raw.split(",")
        if len(cells) != ncol:
            raise LogFormatError(f"expected {ncol} fields, found {len(cells)}", i)
        vals = [_parse_float(c.strip(), i, h) for c, h in zip(cells, header)]
        if not vals[0] > prev_t:
            raise LogFormatError(f"time {vals[0]!r} does not increase (previous {prev_t!r})", i)
        prev_t = vals[0]
        rows.append(vals)
    if not rows:
        raise LogFormatError("log has a header but no samples", 2)
    a = np.array(rows)
    truth = None
    if ncol > len(LOG_COLUMNS):
        n = len(a)
        truth = Truth(a[:, 0].copy(), a[:, 10:14].copy(), np.full((n, 3), np.nan), a[:, 14:17].copy())
    return SensorLog(a[:, 0].copy(), a[:, 1:4].copy(), a[:, 4:7].copy(), a[:, 7:10].copy(), truth)


def write_estimates(path, run):
    """Per-sample estimates of a :class:`~invahrs.filters.FilterRun`."""
    rows = np.hstack([run.t[:, None], run.q, run.euler(), run.bias, run.E])
    write_table(path, ESTIMATE_COLUMNS, rows)


def write_gain_trace(path, run):
    """Decimated gain trace of an adaptive filter, one flattened 6x6 matrix per row."""
    K = np.asarray(run.gains).reshape(len(run.gain_t), -1)
    write_table(path, GAIN_COLUMNS, np.hstack([np.asarray(run.gain_t)[:, None], K]))


def convert_columns(src, dst, mapping, scale=None, delimiter=","):
    """
    Re-map a foreign CSV capture onto the log schema (converter stub).

    Parameters
    ----------
    src, dst : path
    mapping : dict
        Log column name -> source column name, for every name in
        :data:`LOG_COLUMNS`.
    scale : dict, optional
        Log column name -> multiplicative factor (unit conversion, e.g.
        ``{"t": 1e-3}`` for millisecond stamps).

    Rows are written in source order; :func:`read_log` validates the result.
    """
    missing = [c for c in LOG_COLUMNS if c not in mapping]
    if missing:
        raise ConfigError(f"mapping lacks log columns {missing}")
    scale = scale or {}
    with open(src, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise LogFormatError("empty file", 1)
    head = [h.strip() for h in lines[0].split(delimiter)]
    try:
        idx = [head.index(mapping[c]) for c in LOG_COLUMNS]
    except ValueError as exc:
        raise LogFormatError(f"source header lacks a mapped column ({exc})", 1) from None
    out = []
    for i, raw in enumerate(lines[1:], start=2):
        cells = raw.split(delimiter)
        if len(cells) != len(head):
            raise LogFormatError(f"expected {len(head)} fields, found {len(cells)}", i)
        out.append([_parse_float(cells[j].strip(), i, c) * scale.get(c, 1.0) for j, c in zip(idx, LOG_COLUMNS)])
    write_table(dst, LOG_COLUMNS, np.array(out).reshape(-1, len(LOG_COLUMNS)))
