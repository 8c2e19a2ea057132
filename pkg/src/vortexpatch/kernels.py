"""Transport kernel selection.

The compiled extension is used when it was built; otherwise the numpy
reference implementation. Set ``VORTEXPATCH_PURE=1`` to force the fallback.
"""

import os

from . import _kernels_py
from ._kernels_py import LIMITERS

BACKEND = "python"
advection_rhs = _kernels_py.advection_rhs

if os.environ.get("VORTEXPATCH_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        BACKEND = "cython"
        advection_rhs = _compiled.advection_rhs

__all__ = ["BACKEND", "LIMITERS", "advection_rhs"]
