"""Kernel selection: compiled extension when importable, pure Python otherwise.

Set ``PLLIDENT_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
rk4_integrate = _pykernels.rk4_integrate

if os.environ.get("PLLIDENT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        rk4_integrate = _kernels.rk4_integrate

__all__ = ["BACKEND", "rk4_integrate"]
