"""Hot loops with a numba backend and a numpy fallback.

Set ``ODI_SOLVE_NUMBA=0`` before import to force the numpy path (also used
automatically when numba is not importable).  Both backends expose the same
functions with identical semantics; ``BACKEND`` names the active one.
"""

from __future__ import annotations

import os

from . import _numpy

__all__ = [
    "BACKEND",
    "eval_piecewise",
    "tridiag_solve",
    "scatter_load",
    "weighted_tridiag",
    "box_qp_grid",
    "numpy_backend",
    "numba_backend",
]


def _wants_numba() -> bool:
    flag = os.environ.get("ODI_SOLVE_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


def numpy_backend():
    return _numpy


def numba_backend():
    """The numba module, or None when numba is unavailable."""
    try:
        from . import _numba
    except ImportError:
        return None
    return _numba


_impl = numba_backend() if _wants_numba() else None
if _impl is None:
    _impl = _numpy
    BACKEND = "numpy"
else:
    BACKEND = "numba"

eval_piecewise = _impl.eval_piecewise
tridiag_solve = _impl.tridiag_solve
scatter_load = _impl.scatter_load
weighted_tridiag = _impl.weighted_tridiag
box_qp_grid = _impl.box_qp_grid
