"""Kernel backend selection.

The compiled core (``a2k._kernels``) is used when it imports; otherwise the
numpy fallback (``a2k._pykernels``). Set ``A2K_BACKEND=python`` to force the
fallback, or switch at runtime with :func:`use`.
"""

import contextlib
import os

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _pykernels}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled


def available():
    return sorted(_BACKENDS)


def _initial():
    requested = os.environ.get("A2K_BACKEND", "").strip().lower()
    if requested:
        if requested not in _BACKENDS:
            raise ImportError(f"A2K_BACKEND={requested!r} is not available; have {available()}")
        return requested
    return "compiled" if "compiled" in _BACKENDS else "python"


_active = _initial()


def name():
    """Name of the backend currently serving kernel calls."""
    return _active


def kernels():
    return _BACKENDS[_active]


def set_backend(backend):
    global _active
    if backend not in _BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; have {available()}")
    _active = backend


@contextlib.contextmanager
def use(backend):
    """Temporarily route kernel calls through ``backend``."""
    previous = _active
    set_backend(backend)
    try:
        yield
    finally:
        set_backend(previous)
