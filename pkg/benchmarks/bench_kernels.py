"""Time the numba and numpy kernel backends on desk-cnn sized tensors.

    python3 benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from freqstab.kernels import _numba, _numpy
from freqstab.tensor import Rng


def _case(batch, c, size, out, k):
    rng = Rng(0)
    x = rng.normal(batch * c * size * size).reshape(batch, c, size, size)
    w = rng.normal(out * c * k * k).reshape(out, c, k, k)
    b = rng.normal(out)
    return x, w, b


def bench(impl, x, w, b, repeat):
    y = impl.conv2d_forward(x, w, b, 1)
    dout = np.ones_like(y)
    p, idx = impl.maxpool_forward(y, 2, 2)
    dp = np.ones_like(p)
    ops = {
        "conv fwd": lambda: impl.conv2d_forward(x, w, b, 1),
        "conv bwd": lambda: impl.conv2d_backward(x, w, dout, 1),
        "pool fwd": lambda: impl.maxpool_forward(y, 2, 2),
        "pool bwd": lambda: impl.maxpool_backward(dp, idx, y.shape[2], y.shape[3]),
    }
    out = {}
    for name, fn in ops.items():
        fn()  # warm up (numba compiles on first call)
        out[name] = min(timeit.repeat(fn, number=1, repeat=repeat)) * 1e3
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    cases = {
        "layer1 16x1x16x16 k5": _case(16, 1, 16, 16, 5),
        "layer2 16x16x6x6 k5": _case(16, 16, 6, 16, 5),
        "cifar 16x3x32x32 k5": _case(16, 3, 32, 16, 5),
    }
    print(f"{'case':24s} {'op':9s} {'numba ms':>9s} {'numpy ms':>9s} {'speedup':>8s}")
    for label, (x, w, b) in cases.items():
        a = bench(_numba, x, w, b, args.repeat)
        n = bench(_numpy, x, w, b, args.repeat)
        for op in a:
            print(f"{label:24s} {op:9s} {a[op]:9.3f} {n[op]:9.3f} {n[op] / a[op]:8.2f}")


if __name__ == "__main__":
    main()
