"""Select the kernel backend at import time.

Prefers the compiled extension (flowdance.nn._kernels, built from
_kernels.pyx) and falls back to the numpy implementation when it is not
built or when FLOWDANCE_FORCE_NUMPY=1 is set. Both expose the same
functions; `kernel_backend()` reports which one is live.
"""

from __future__ import annotations

import os

from flowdance.nn import _kernels_np

_impl = _kernels_np
if os.environ.get("FLOWDANCE_FORCE_NUMPY", "0") != "1":
    try:
        from flowdance.nn import _kernels as _compiled  # type: ignore

        _impl = _compiled
    except ImportError:
        _impl = _kernels_np

im2col2d = _impl.im2col2d
col2im2d = _impl.col2im2d
im2col3d = _impl.im2col3d
col2im3d = _impl.col2im3d
grid_sample_forward = _impl.grid_sample_forward
grid_sample_backward = _impl.grid_sample_backward


def kernel_backend() -> str:
    return _impl.BACKEND


def numpy_kernels():
    """The fallback module itself (used by parity tests and benchmarks)."""
    return _kernels_np


def compiled_kernels():
    """The compiled module, or None if it is not built."""
    try:
        from flowdance.nn import _kernels as compiled  # type: ignore

        return compiled
    except ImportError:
        return None
