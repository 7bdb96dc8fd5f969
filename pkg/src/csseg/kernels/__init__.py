"""Conv kernel backend selection.

The compiled extension is preferred when it imported cleanly; otherwise
the numpy fallback is used. `CSSEG_KERNELS=numpy` or
`CSSEG_KERNELS=native` forces one side (forcing native raises if the
extension is missing). Both backends expose the same three functions on
contiguous float64 arrays:

    conv2d_forward(x, w, b, stride, pad)          -> y
    conv2d_grad_input(w, gy, x_shape, stride, pad) -> dL/dx
    conv2d_grad_kernel(x, gy, w_shape, stride, pad) -> dL/dw
"""

import os

from . import numpy_impl

try:
    from . import _native
except ImportError:
    _native = None


def _select():
    forced = os.environ.get("CSSEG_KERNELS", "").strip().lower()
    if forced == "numpy":
        return numpy_impl
    if forced == "native":
        if _native is None:
            raise ImportError("CSSEG_KERNELS=native but the compiled extension is unavailable")
        return _native
    if forced:
        raise ImportError(f"CSSEG_KERNELS must be 'native' or 'numpy', got {forced!r}")
    return _native if _native is not None else numpy_impl


_impl = _select()

BACKEND = _impl.BACKEND
conv2d_forward = _impl.conv2d_forward
conv2d_grad_input = _impl.conv2d_grad_input
conv2d_grad_kernel = _impl.conv2d_grad_kernel

native_impl = _native
