"""Kernel backend selection.

The compiled Cython module is used when importable; set
``MPRNTRACK_PURE_PYTHON=1`` to force the pure-Python fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("MPRNTRACK_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

likelihood_sums = _impl.likelihood_sums
update_factors = _impl.update_factors
systematic_indices = _impl.systematic_indices
lm_solve = _impl.lm_solve

__all__ = ["BACKEND", "likelihood_sums", "update_factors", "systematic_indices", "lm_solve"]
