"""Hot convolution/pooling kernels.

The numba backend is used when numba imports cleanly and the environment
variable ``FREQSTAB_NO_NUMBA`` is unset (or "0"). Setting it to "1" selects
the pure-numpy path, which is also the fallback when numba is missing.

Convolutions always go through the numpy (BLAS tensordot) path: on desk-cnn
shapes the numba loops are 1.6-10x slower there, while numba pooling is 3-10x
faster than the numpy version (see benchmarks/bench_kernels.py). The numba
conv loops are kept as the benchmark comparator.
"""
import os

from . import _numpy

BACKEND = "numpy"
_impl = _numpy

if os.environ.get("FREQSTAB_NO_NUMBA", "0") in ("", "0"):
    try:
        from . import _numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass
    else:
        _impl = _numba
        BACKEND = "numba"

conv2d_forward = _numpy.conv2d_forward
conv2d_backward = _numpy.conv2d_backward
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward

__all__ = [
    "BACKEND",
    "conv2d_forward",
    "conv2d_backward",
    "maxpool_forward",
    "maxpool_backward",
]
