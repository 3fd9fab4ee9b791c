import numpy as np
import pytest

from freqstab.reference import ReferenceConfig, reference_data, reference_model


def naive_dft(f, extents):
    """O(N^2 * M^2) nested-sum DFT of ``f`` embedded at the origin of ``extents``."""
    f = np.asarray(f, dtype=np.float64)
    out = np.zeros(extents, dtype=np.complex128)
    for k in np.ndindex(*extents):
        acc = 0j
        for x in np.ndindex(*f.shape):
            phase = sum(ki * xi / n for ki, xi, n in zip(k, x, extents))
            acc += f[x] * np.exp(-2j * np.pi * phase)
        out[k] = acc
    return out


def direct_dft(f, extents):
    """Direct summation with the full (non-separable) phase tensor."""
    f = np.asarray(f, dtype=np.float64)
    ks = np.meshgrid(*[np.arange(n) for n in extents], indexing="ij")
    xs = np.meshgrid(*[np.arange(n) for n in f.shape], indexing="ij")
    phase = sum(k.reshape(k.shape + (1,) * f.ndim) * x / n for k, x, n in zip(ks, xs, extents))
    return np.sum(f * np.exp(-2j * np.pi * phase), axis=tuple(range(-f.ndim, 0)))


ACCEPTANCE = {}


def record(criterion, ok, detail):
    ACCEPTANCE[criterion] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def ref_cfg():
    return ReferenceConfig()


@pytest.fixture(scope="session")
def ref_data(ref_cfg):
    return reference_data(ref_cfg)


@pytest.fixture(scope="session")
def ref_model(ref_cfg, ref_data):
    return reference_model(ref_cfg, ref_data[0])
