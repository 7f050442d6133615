"""Hot numeric kernels with a numba fast path and a pure-NumPy fallback.

The active backend is chosen once at import time:

* ``FINERCAM_NUMBA=0`` in the environment forces the NumPy path.
* Otherwise the numba path is used when numba imports cleanly, falling back
  to NumPy if it does not.

``benchmarks/bench_kernels.py`` times the two paths against each other and
checks they agree numerically.
"""

from __future__ import annotations

import os

from . import _numpy_impl

if os.environ.get("FINERCAM_NUMBA", "1") == "0":
    _impl = _numpy_impl
else:
    try:
        from . import _numba_impl as _impl  # noqa: F401
    except ImportError:
        _impl = _numpy_impl

conv2d_stride = _impl.conv2d_stride
bilinear_resize = _impl.bilinear_resize
weighted_sum = _impl.weighted_sum
relu_grad_sum = _impl.relu_grad_sum


def backend_name() -> str:
    """Name of the active kernel backend: ``"numba"`` or ``"numpy"``."""
    return _impl.NAME


def warmup() -> str:
    """Trigger JIT compilation of every kernel on tiny inputs.

    Call once before timing-sensitive work; a no-op on the NumPy path.
    Returns the backend name.
    """
    import numpy as np

    img = np.zeros((4, 4, 2), dtype=np.float32)
    ker = np.zeros((2, 2, 2, 2), dtype=np.float32)
    conv2d_stride(img, ker, 2, True)
    conv2d_stride(img, ker, 2, False)
    maps = np.zeros((2, 3, 3), dtype=np.float32)
    bilinear_resize(maps[0], 5, 7)
    weighted_sum(maps, np.zeros(2, dtype=np.float32))
    relu_grad_sum(maps, maps)
    return backend_name()
