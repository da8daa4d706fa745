"""Backend selection for the fast-dynamics kernels.

The compiled Cython extension is used when it was built; otherwise the
NumPy fallback is imported. Set ``MTSSL_PURE_PYTHON=1`` to force the
fallback (useful for benchmarking and for checking the two agree).
"""

import os

from . import _pykernels

if os.environ.get("MTSSL_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

fast_step_inplace = _impl.fast_step_inplace
relax_inplace = _impl.relax_inplace

__all__ = ["BACKEND", "fast_step_inplace", "relax_inplace"]
