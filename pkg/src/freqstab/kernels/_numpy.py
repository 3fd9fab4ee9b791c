"""Vectorized numpy versions of the hot convolution and pooling kernels."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x, kh, kw, stride):
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d_forward(x, w, b, stride):
    o, c, kh, kw = w.shape
    win = _windows(x, kh, kw, stride)  # (n, c, oh, ow, kh, kw)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (n, oh, ow, o)
    out = out.transpose(0, 3, 1, 2) + b[None, :, None, None]
    return np.ascontiguousarray(out)


def conv2d_backward(x, w, dout, stride):
    o, c, kh, kw = w.shape
    n, _, oh, ow = dout.shape
    win = _windows(x, kh, kw, stride)
    dw = np.tensordot(dout, win, axes=([0, 2, 3], [0, 2, 3]))  # (o, c, kh, kw)
    db = dout.sum(axis=(0, 2, 3))
    dx = np.zeros_like(x)
    for i in range(kh):
        for j in range(kw):
            contrib = np.tensordot(dout, w[:, :, i, j], axes=([1], [0]))  # (n, oh, ow, c)
            dx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += contrib.transpose(0, 3, 1, 2)
    return dx, np.ascontiguousarray(dw), db


def maxpool_forward(x, window, stride):
    n, c, h, w = x.shape
    win = _windows(x, window, window, stride)
    oh, ow = win.shape[2], win.shape[3]
    flat = win.reshape(n, c, oh, ow, window * window)
    a = flat.argmax(axis=-1)  # first maximum wins ties
    out = np.take_along_axis(flat, a[..., None], axis=-1)[..., 0]
    ys = np.arange(oh)[:, None] * stride + a // window
    xs = np.arange(ow)[None, :] * stride + a % window
    return np.ascontiguousarray(out), (ys * w + xs).astype(np.int64)


def maxpool_backward(dout, idx, h, w):
    n, c, oh, ow = dout.shape
    dx = np.zeros((n * c, h * w))
    rows = np.repeat(np.arange(n * c), oh * ow)
    np.add.at(dx, (rows, idx.reshape(-1)), dout.reshape(-1))
    return dx.reshape(n, c, h, w)
