"""Magnitude-spectrum analyses of convolution kernels and noise."""
from dataclasses import dataclass, field

import numpy as np

from .dft import DEFAULT_PAD, center_shift, centered_frequencies, dft2, dft3, magnitude
from .tensor import as_tensor

_SOBEL_SMOOTH = np.array([1.0, 2.0, 1.0])
_PREWITT_SMOOTH = np.array([1.0, 1.0, 1.0])
_DERIV = np.array([-1.0, 0.0, 1.0])


def gaussian_kernel3(sigma=0.5):
    """Normalized 3x3 Gaussian sampled on {-1, 0, 1}^2."""
    t = np.arange(-1.0, 2.0)
    g = np.exp(-(t[:, None] ** 2 + t[None, :] ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


REFERENCE_FILTERS = {
    "sobel_x": lambda: np.outer(_SOBEL_SMOOTH, _DERIV),
    "sobel_y": lambda: np.outer(_DERIV, _SOBEL_SMOOTH),
    "prewitt_x": lambda: np.outer(_PREWITT_SMOOTH, _DERIV),
    "prewitt_y": lambda: np.outer(_DERIV, _PREWITT_SMOOTH),
    "gaussian3_halfsigma": lambda: gaussian_kernel3(0.5),
}


def reference_filter(name):
    try:
        return REFERENCE_FILTERS[name]()
    except KeyError:
        raise ValueError(f"unknown reference filter {name!r}; known: {sorted(REFERENCE_FILTERS)}") from None


@dataclass
class SpectrumSummary:
    filter_id: str
    grid: np.ndarray  # centered magnitude, pad x pad
    peak: float
    concentration: float
    entropy: float
    planes: list = field(default_factory=list)  # per channel-frequency plane, 3D kernels only


def band_mask(shape, band_fraction=0.5):
    """Boolean mask of the centered low band: ``-hw <= k < hw`` per axis."""
    mask = np.ones(shape, dtype=bool)
    for axis, n in enumerate(shape):
        k = np.arange(n) - n // 2
        hw = band_fraction * n / 2.0
        inside = (k >= -hw) & (k < hw)
        view = [1] * len(shape)
        view[axis] = n
        mask &= inside.reshape(view)
    return mask


def concentration(mag_grid, band_fraction=0.5):
    """Fraction of squared-magnitude energy inside the centered low band."""
    g = as_tensor(mag_grid)
    if np.any(g < 0):
        raise ValueError("magnitude grid must be non-negative")
    energy = g * g
    total = energy.sum()
    if total == 0:
        raise ValueError("concentration undefined for an all-zero grid")
    return float(energy[band_mask(g.shape, band_fraction)].sum() / total)


def spectral_entropy(mag_grid):
    """Shannon entropy (nats) of the energy-normalized bins."""
    energy = as_tensor(mag_grid) ** 2
    total = energy.sum()
    if total == 0:
        raise ValueError("entropy undefined for an all-zero grid")
    p = energy[energy > 0] / total
    return float(-(p * np.log(p)).sum())


def _summary(filter_id, grid, planes=()):
    return SpectrumSummary(
        filter_id=filter_id,
        grid=grid,
        peak=float(grid.max()),
        concentration=concentration(grid),
        entropy=spectral_entropy(grid),
        planes=list(planes),
    )


def centered_magnitude2(kernel, pad=DEFAULT_PAD):
    return magnitude(center_shift(dft2(kernel, pad)))


def filter_spectrum(kernel, pad=DEFAULT_PAD, filter_id="filter"):
    """Centered magnitude summary of a 2D kernel, or of a 3D kernel.

    For 3D kernels ``planes`` holds one summary per channel-frequency plane
    and the returned grid is the mean magnitude over that axis.
    """
    k = as_tensor(kernel)
    if k.ndim == 2:
        return _summary(filter_id, centered_magnitude2(k, pad))
    if k.ndim != 3:
        raise ValueError(f"kernel must be 2D or 3D, got shape {k.shape}")
    cube = magnitude(center_shift(dft3(k, pad)))
    d = k.shape[0]
    freqs = centered_frequencies(d)
    planes = [_summary(f"{filter_id}[e1={freqs[i]:+.3f}]", cube[i]) for i in range(d)]
    return _summary(filter_id, cube.mean(axis=0), planes)


def mean_spectrum(layer_kernels, pad=DEFAULT_PAD, filter_id="mean"):
    """Mean of centered 2D magnitude grids over every filter and input channel."""
    kernels = [as_tensor(k) for k in layer_kernels]
    if not kernels:
        raise ValueError("mean_spectrum needs at least one kernel")
    kernels = [k[None] if k.ndim == 2 else k for k in kernels]
    spatial = {k.shape[1:] for k in kernels}
    if len(spatial) != 1 or any(k.ndim != 3 for k in kernels):
        raise ValueError(f"ragged kernel shapes: {sorted({k.shape for k in kernels})}")
    acc = None
    count = 0
    for k in kernels:
        for ch in k:
            m = centered_magnitude2(ch, pad)
            acc = m if acc is None else acc + m
            count += 1
    return _summary(filter_id, acc / count)


def export_pointcloud(kernel, pad=DEFAULT_PAD, threshold_fraction=0.0):
    """Rows ``(e1, e2, e3, magnitude)`` of the centered 3D spectrum.

    Frequencies are normalized cycles/sample in [-0.5, 0.5); only bins with
    magnitude >= ``threshold_fraction * peak`` are kept.
    """
    k = as_tensor(kernel)
    if k.ndim != 3:
        raise ValueError(f"point cloud export needs a 3D kernel, got shape {k.shape}")
    cube = magnitude(center_shift(dft3(k, pad)))
    d, p, q = cube.shape
    e1, e2, e3 = np.meshgrid(centered_frequencies(d), centered_frequencies(p),
                             centered_frequencies(q), indexing="ij")
    rows = np.stack([e1.ravel(), e2.ravel(), e3.ravel(), cube.ravel()], axis=1)
    keep = rows[:, 3] >= threshold_fraction * cube.max()
    return rows[keep]


def noise_spectrum(noise):
    """Uncentered magnitude of an image-shaped noise tensor (no padding)."""
    r = as_tensor(noise)
    if r.ndim == 2:
        return magnitude(dft2(r))
    return magnitude(dft3(r))


def coverage(mag, rel_threshold=0.01):
    """Fraction of bins whose magnitude exceeds ``rel_threshold`` of the peak."""
    mag = as_tensor(mag)
    peak = mag.max()
    if peak == 0:
        return 0.0
    return float(np.mean(mag > rel_threshold * peak))
