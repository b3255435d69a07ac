"""Kernel backend selection.

At import time the compiled extension is preferred when it built; the numpy
kernels are the fallback. ``NPTMETRIC_BACKEND`` overrides the choice:
``python`` forces the fallback, ``c`` demands the extension (ImportError if
it is missing), anything else or unset means auto.

Matrix products stay on numpy/BLAS in both configurations; only the
selection scans differ.
"""

import os

from . import py_kernels

_BACKENDS = {"python": py_kernels}

try:
    from . import _ckernels

    _BACKENDS["c"] = _ckernels
except ImportError:
    _ckernels = None

_requested = os.environ.get("NPTMETRIC_BACKEND", "auto").strip().lower()
if _requested == "c" and "c" not in _BACKENDS:
    raise ImportError(
        "NPTMETRIC_BACKEND=c but the compiled extension is not available; "
        "reinstall with a C toolchain or unset the variable"
    )
if _requested in _BACKENDS:
    _active = _BACKENDS[_requested]
else:
    _active = _BACKENDS.get("c", py_kernels)


def kernels():
    """The active kernel module."""
    return _active


def backend_name() -> str:
    return _active.NAME


def available_backends():
    return sorted(_BACKENDS)


def set_backend(name: str):
    """Switch the active backend (benchmarks and tests only; not thread-safe)."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {available_backends()}")
    _active = _BACKENDS[name]


def get_backend(name: str):
    """A specific backend module, without switching the active one."""
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {available_backends()}")
    return _BACKENDS[name]
