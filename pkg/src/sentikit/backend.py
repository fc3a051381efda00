"""Kernel backend selection: numba-compiled loops or pure-NumPy fallbacks.

The compute-heavy inner loops (GloVe updates, LSTM recurrences, max pooling)
exist in two interchangeable implementations. Which one the package uses is
decided once, at import time, from the SENTIKIT_BACKEND environment variable:

* ``SENTIKIT_BACKEND=numpy``  -- force the pure-NumPy path.
* ``SENTIKIT_BACKEND=numba``  -- require numba; raise if it is missing.
* unset or ``auto``           -- numba when importable, NumPy otherwise.

Results are deterministic within a backend; across backends they agree to
floating-point round-off (the kernels perform the same arithmetic but BLAS
summation order may differ in the last ulp).
"""

import os

_CHOICE = os.environ.get("SENTIKIT_BACKEND", "auto").lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    numba = None
    HAVE_NUMBA = False

if _CHOICE == "numpy":
    NUMBA_ENABLED = False
elif _CHOICE == "numba":
    if not HAVE_NUMBA:
        raise ImportError("SENTIKIT_BACKEND=numba but numba is not importable")
    NUMBA_ENABLED = True
elif _CHOICE == "auto":
    NUMBA_ENABLED = HAVE_NUMBA
else:
    raise ValueError(
        f"unrecognized SENTIKIT_BACKEND={_CHOICE!r}; expected numba, numpy or auto"
    )


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return "numba" if NUMBA_ENABLED else "numpy"


def compile_kernel(func):
    """numba-compile ``func`` when numba is importable, else return it unchanged.

    Compilation is cached on disk, so repeated runs pay the JIT cost once.
    """
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func
