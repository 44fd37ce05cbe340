"""Kernel backend selection.

Hot loops (warping, cost volumes, dynamic filtering) ship in two flavours: a
numba ``@njit`` kernel and a vectorised numpy fallback. The numba path is used
when numba imports cleanly and ``MIDFRAME_DISABLE_NUMBA`` is unset (or "0").
Tests and the benchmark switch backends at runtime with :func:`use_backend`.
"""
from __future__ import annotations

import contextlib
import os

_FALSEY = ("", "0", "false", "no", "off")

try:
    import numba

    HAVE_NUMBA = True
    # the bundled TBB is often too old and numba warns on every parallel launch
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "omp"
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_disabled() -> bool:
    return os.environ.get("MIDFRAME_DISABLE_NUMBA", "").strip().lower() not in _FALSEY


_state = {"numba": HAVE_NUMBA and not _env_disabled()}


if HAVE_NUMBA:
    def njit(*args, **kwargs):
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return numba.njit(*args, **kwargs)

    prange = numba.prange
else:  # pragma: no cover
    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

    prange = range


def numba_enabled() -> bool:
    return _state["numba"]


def backend_name() -> str:
    return "numba" if _state["numba"] else "numpy"


def set_backend(name: str) -> None:
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _state["numba"] = name == "numba"


@contextlib.contextmanager
def use_backend(name: str):
    prev = backend_name()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def set_threads(n: int) -> None:
    """Set the numba worker count. Kernels parallelise over rows only, so the
    output does not depend on ``n``."""
    if n < 1:
        raise ValueError("thread count must be >= 1")
    if HAVE_NUMBA:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def available_backends() -> list[str]:
    return ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
