"""
Kernel backend selection.

The compiled ``_kernels`` extension is used when importable; otherwise (or
when ``INVAHRS_BACKEND=python``) the pure-Python ``_pykernels`` module is
used. Both expose the same functions and status codes.
"""

import os

from . import _pykernels


def _load():
    choice = os.environ.get("INVAHRS_BACKEND", "auto").lower()
    if choice == "python":
        return _pykernels
    try:
        from . import _kernels
    except ImportError:
        if choice == "cython":
            raise
        return _pykernels
    return _kernels


kernels = _load()
BACKEND = kernels.NAME


def available():
    """Names of the backends importable in this environment."""
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


def get(name):
    """Kernel module by name (``"cython"`` or ``"python"``)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
