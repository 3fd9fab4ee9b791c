"""Dense float64 arrays and a portable seeded random stream.

Tensors are plain ``numpy.ndarray`` objects in float64, C order. The helpers
here add the shape checks and the deterministic noise source that the rest of
the package relies on.
"""
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

_G = np.uint64(GOLDEN_GAMMA)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_INV53 = 1.0 / (1 << 53)


class ShapeError(ValueError):
    pass


def as_tensor(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def zeros(shape):
    return np.zeros(shape, dtype=np.float64)


def add(a, b):
    """Elementwise sum of two equally shaped tensors (no broadcasting)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch in add: {a.shape} vs {b.shape}")
    return a + b


def scale(a, alpha):
    return as_tensor(a) * float(alpha)


def l2_norm(a):
    a = as_tensor(a).ravel()
    return float(np.sqrt(np.dot(a, a)))


def _mix64(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix64(state):
    """One scalar splitmix64 step. Returns ``(new_state, output)``."""
    state = (state + GOLDEN_GAMMA) & MASK64
    return state, _mix64(state)


def derive_seed(seed, *keys):
    """Hash a base seed and integer keys into an independent 64-bit seed."""
    h = _mix64((int(seed) + GOLDEN_GAMMA) & MASK64)
    for k in keys:
        h = _mix64(((h ^ _mix64((int(k) + GOLDEN_GAMMA) & MASK64)) + GOLDEN_GAMMA) & MASK64)
    return h


class Rng:
    """splitmix64 stream with Box-Muller normals.

    The stream is counter based: the i-th raw draw after seeding is
    ``mix(seed + i * gamma)``, which lets bulk draws be vectorized without
    changing the sequence. ``normal(n)`` consumes ``2 * ceil(n / 2)`` raw
    draws; an unused odd deviate is discarded.
    """

    def __init__(self, seed=0):
        self.seed = int(seed) & MASK64
        self.state = self.seed

    def spawn(self, index):
        return Rng(derive_seed(self.seed, index))

    def next_u64(self, n=None):
        if n is None:
            self.state, out = splitmix64(self.state)
            return out
        n = int(n)
        steps = np.arange(1, n + 1, dtype=np.uint64) * _G
        z = steps + np.uint64(self.state)
        self.state = (self.state + n * GOLDEN_GAMMA) & MASK64
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)

    def uniform(self, n=None):
        """Doubles in [0, 1) from the top 53 bits of each draw."""
        if n is None:
            return (self.next_u64() >> 11) * _INV53
        return (self.next_u64(n) >> _S11).astype(np.float64) * _INV53

    def normal(self, n):
        n = int(n)
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
        u2 = u[1::2]
        rad = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * m, dtype=np.float64)
        out[0::2] = rad * np.cos(theta)
        out[1::2] = rad * np.sin(theta)
        return out[:n]

    def integers(self, high, n):
        """Uniform integers in [0, high)."""
        idx = np.floor(self.uniform(n) * high).astype(np.int64)
        return np.minimum(idx, high - 1)

    def permutation(self, n):
        return np.argsort(self.uniform(n), kind="stable")


def gaussian_fill(shape, sigma, rng):
    """i.i.d. N(0, sigma^2) tensor, sigma in intensity levels."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    size = int(np.prod(shape, dtype=np.int64))
    if sigma == 0:
        return zeros(shape)
    return (float(sigma) * rng.normal(size)).reshape(shape)
