"""Selection between numba-compiled kernels and the pure-numpy fallback.

Set ``PATCHECG_NUMBA=0`` to force the numpy path. Any other value (or an
unset variable) uses numba when it can be imported.
"""
import os

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False


def _flag_enabled():
    flag = os.environ.get("PATCHECG_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


USE_NUMBA = NUMBA_AVAILABLE and _flag_enabled()


def njit(fn):
    """Lazily compiled ``numba.njit`` version of ``fn`` (``None`` without numba)."""
    if not NUMBA_AVAILABLE:
        return None
    return numba.njit(cache=True, nogil=True)(fn)


def backend():
    return "numba" if USE_NUMBA else "numpy"
