"""Zero-padded discrete Fourier transforms of kernels, feature maps and noise.

The forward transform is unnormalized::

    F[k1, k2] = sum_y sum_x f[y, x] * exp(-2j*pi*(k1*y/P + k2*x/P))

with the signal placed at the origin of a P x P zero grid. It is evaluated by
direct summation, done separably as a product of DFT matrices; exponents are
reduced modulo P before the complex exponential so twiddles stay exact to a
few ulps even on large grids.
"""
from dataclasses import dataclass

import numpy as np

from .tensor import as_tensor

DEFAULT_PAD = 64


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray  # complex128, one entry per frequency bin
    centered: bool = False

    @property
    def extents(self):
        return self.values.shape


def dft_matrix(n_out, n_in):
    """``(n_out, n_in)`` matrix mapping a length-``n_in`` signal to ``n_out`` bins."""
    k = np.arange(n_out)[:, None]
    x = np.arange(n_in)[None, :]
    phase = (k * x) % n_out
    return np.exp(-2j * np.pi * phase / n_out)


def _check_pad(h, w, pad):
    if pad < max(h, w):
        raise ValueError(f"pad {pad} smaller than signal extent {h}x{w}")


def dft2(signal, pad=None):
    """2D DFT of ``signal`` zero-padded to ``pad x pad`` (uncentered)."""
    f = as_tensor(signal)
    if f.ndim != 2:
        raise ValueError(f"dft2 expects a 2D signal, got shape {f.shape}")
    h, w = f.shape
    pad = max(h, w) if pad is None else int(pad)
    _check_pad(h, w, pad)
    values = dft_matrix(pad, h) @ f @ dft_matrix(pad, w).T
    return Spectrum(values)


def dft3(kernel, pad_spatial=None):
    """3D DFT over (channel, y, x); only the spatial axes are zero-padded."""
    f = as_tensor(kernel)
    if f.ndim != 3:
        raise ValueError(f"dft3 expects a 3D signal, got shape {f.shape}")
    d, h, w = f.shape
    pad = max(h, w) if pad_spatial is None else int(pad_spatial)
    _check_pad(h, w, pad)
    values = np.einsum(
        "ac,by,ex,cyx->abe",
        dft_matrix(d, d), dft_matrix(pad, h), dft_matrix(pad, w), f,
        optimize=True,
    )
    return Spectrum(values)


def magnitude(s):
    return np.abs(s.values)


def center_shift(s):
    """Move DC to index ``floor(n/2)`` on every axis."""
    if s.centered:
        raise ValueError("spectrum is already centered")
    shifts = [n // 2 for n in s.values.shape]
    return Spectrum(np.roll(s.values, shifts, axis=tuple(range(s.values.ndim))), centered=True)


def uncenter_shift(s):
    if not s.centered:
        raise ValueError("spectrum is not centered")
    shifts = [-(n // 2) for n in s.values.shape]
    return Spectrum(np.roll(s.values, shifts, axis=tuple(range(s.values.ndim))), centered=False)


def centered_frequencies(n):
    """Normalized frequencies (cycles/sample) of a centered axis, in [-0.5, 0.5)."""
    return (np.arange(n) - n // 2) / n
