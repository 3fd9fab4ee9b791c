"""numba-compiled loop kernels; same contracts as the numpy versions."""
import numpy as np
from numba import njit


@njit(cache=True)
def conv2d_forward(x, w, b, stride):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    oh = (h - kh) // stride + 1
    ow = (wd - kw) // stride + 1
    out = np.empty((n, o, oh, ow))
    # tap-outer, column-inner order keeps the innermost loop contiguous so LLVM vectorizes it
    for i in range(n):
        for f in range(o):
            out[i, f] = b[f]
            for ch in range(c):
                for p in range(kh):
                    for q in range(kw):
                        wv = w[f, ch, p, q]
                        for y in range(oh):
                            row = x[i, ch, y * stride + p]
                            dst = out[i, f, y]
                            for z in range(ow):
                                dst[z] += wv * row[z * stride + q]
    return out


@njit(cache=True)
def conv2d_backward(x, w, dout, stride):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    oh = dout.shape[2]
    ow = dout.shape[3]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    db = np.zeros(o)
    for i in range(n):
        for f in range(o):
            db[f] += dout[i, f].sum()
            for ch in range(c):
                for p in range(kh):
                    for q in range(kw):
                        wv = w[f, ch, p, q]
                        acc = 0.0
                        for y in range(oh):
                            g = dout[i, f, y]
                            row = x[i, ch, y * stride + p]
                            drow = dx[i, ch, y * stride + p]
                            for z in range(ow):
                                acc += g[z] * row[z * stride + q]
                                drow[z * stride + q] += g[z] * wv
                        dw[f, ch, p, q] += acc
    return dx, dw, db


@njit(cache=True)
def maxpool_forward(x, window, stride):
    n, c, h, w = x.shape
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1
    out = np.empty((n, c, oh, ow))
    idx = np.empty((n, c, oh, ow), dtype=np.int64)
    for i in range(n):
        for ch in range(c):
            for y in range(oh):
                for z in range(ow):
                    y0 = y * stride
                    z0 = z * stride
                    best = x[i, ch, y0, z0]
                    arg = y0 * w + z0
                    for p in range(window):
                        for q in range(window):
                            v = x[i, ch, y0 + p, z0 + q]
                            if v > best:
                                best = v
                                arg = (y0 + p) * w + z0 + q
                    out[i, ch, y, z] = best
                    idx[i, ch, y, z] = arg
    return out, idx


@njit(cache=True)
def maxpool_backward(dout, idx, h, w):
    n, c, oh, ow = dout.shape
    dx = np.zeros((n, c, h, w))
    for i in range(n):
        for ch in range(c):
            for y in range(oh):
                for z in range(ow):
                    a = idx[i, ch, y, z]
                    dx[i, ch, a // w, a % w] += dout[i, ch, y, z]
    return dx
