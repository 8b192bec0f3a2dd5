"""Hot loops, compiled when available.

The Cython extension ``prvr._kernels`` is used if it imports; otherwise the
numpy fallback in ``prvr._kernels_py`` is used. Set ``PRVR_PURE_PYTHON=1``
to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("PRVR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

window_indicator = _impl.window_indicator
apply_indicator = _impl.apply_indicator
offset_bias_matrix = _impl.offset_bias_matrix
offset_bias_grad = _impl.offset_bias_grad
ground_truth_ranks = _impl.ground_truth_ranks

__all__ = [
    "BACKEND",
    "window_indicator",
    "apply_indicator",
    "offset_bias_matrix",
    "offset_bias_grad",
    "ground_truth_ranks",
]
