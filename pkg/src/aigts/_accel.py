"""Numba toggle shared by the hot kernels.

Set ``AIGTS_DISABLE_NUMBA=1`` to force the pure-numpy code paths (useful for
debugging and for checking both paths agree). ``AIGTS_THREADS`` caps the
number of threads numba may use.
"""

import os

_FALSE = {"", "0", "false", "no", "off"}


def _env_flag(name):
    return os.environ.get(name, "").strip().lower() not in _FALSE


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency
    numba = None
    HAVE_NUMBA = False

NUMBA_ENABLED = HAVE_NUMBA and not _env_flag("AIGTS_DISABLE_NUMBA")


def max_threads():
    """Thread cap from ``AIGTS_THREADS`` (None when unset)."""
    raw = os.environ.get("AIGTS_THREADS", "").strip()
    if not raw:
        return None
    n = int(raw)
    if n < 1:
        raise ValueError("AIGTS_THREADS must be >= 1")
    return n


def njit(*args, **kwargs):
    """``numba.njit`` that degrades to the identity decorator without numba."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if len(args) == 1 and callable(args[0]):
        return args[0]
    return wrap


def use_numba(flag=None):
    """Resolve a per-call override against the process-wide setting."""
    if flag is None:
        return NUMBA_ENABLED
    return bool(flag) and HAVE_NUMBA


if HAVE_NUMBA and max_threads() is not None:
    numba.set_num_threads(min(max_threads(), numba.config.NUMBA_NUM_THREADS))
