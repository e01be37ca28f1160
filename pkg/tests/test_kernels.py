"""Compiled and numpy kernels must agree; both must match independent oracles."""
import numpy as np
import pytest
from scipy.linalg import solve_banded

from price_mfg import _pykernels, kernels

try:
    from price_mfg import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None

needs_c = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@needs_c
def test_backends_agree(rng):
    for _ in range(20):
        n = int(rng.integers(5, 60))
        u = rng.normal(size=n)
        V = rng.normal(size=n)
        p = float(rng.normal())
        np.testing.assert_allclose(_ckernels.upwind_momentum(u, p, 0.1),
                                   _pykernels.upwind_momentum(u, p, 0.1), rtol=0, atol=1e-14)
        uc, pc = _ckernels.hjb_step(u, p, 1.5, V, 0.1, 0.01)
        up, pp = _pykernels.hjb_step(u, p, 1.5, V, 0.1, 0.01)
        np.testing.assert_allclose(uc, up, atol=1e-14)
        np.testing.assert_allclose(pc, pp, atol=1e-14)
        m = rng.uniform(0, 1, n)
        b = rng.normal(size=n)
        vol = np.full(n, 0.1)
        np.testing.assert_allclose(_ckernels.fp_step(m, b, vol, 0.01),
                                   _pykernels.fp_step(m, b, vol, 0.01), atol=1e-14)
        k = rng.normal(size=n)
        f = rng.normal(size=n)
        np.testing.assert_allclose(_ckernels.volterra_trapezoid(f, k, 0.05),
                                   _pykernels.volterra_trapezoid(f, k, 0.05), atol=1e-12)


@pytest.mark.parametrize("impl", [_pykernels, kernels])
def test_thomas_matches_banded_solver(impl, rng):
    n = 40
    lower = rng.uniform(-1, 0, n)
    upper = rng.uniform(-1, 0, n)
    diag = 2.5 + rng.uniform(0, 1, n)
    rhs = rng.normal(size=n)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    np.testing.assert_allclose(impl.thomas(lower, diag, upper, rhs), solve_banded((1, 1), ab, rhs),
                               rtol=1e-12, atol=1e-12)


def test_upwind_momentum_selection():
    # u = x^2/2 on [-1, 1]: backward difference where positive, forward where negative
    x = np.linspace(-1, 1, 21)
    p = kernels.upwind_momentum(0.5 * x**2, 0.0, 0.1)
    assert np.all(p[x > 0.05] > 0) and np.all(p[x < -0.05] < 0)
    np.testing.assert_allclose(p[x > 0.05], x[x > 0.05] - 0.05, atol=1e-12)
    # linear u: exact slope everywhere, including the ends
    np.testing.assert_allclose(kernels.upwind_momentum(2.0 * x, 0.5, 0.1), 2.5, atol=1e-12)


def test_fp_step_conserves_and_stays_positive(rng):
    n = 50
    m = rng.uniform(0, 1, n)
    b = rng.normal(size=n)
    vol = np.full(n, 0.2)
    vol[[0, -1]] = 0.1
    dt = 0.9 * 0.1 / np.abs(b).max() / 2
    out = kernels.fp_step(m, b, vol, dt)
    assert out.min() >= 0
    assert out @ vol == pytest.approx(m @ vol, rel=1e-14)


def test_volterra_trapezoid_exact_solution():
    # y = f - int k(t-s) y ds with k = 1, f = 1 has y = exp(-t)
    h = 1e-3
    t = np.arange(0, 2 + h / 2, h)
    y = kernels.volterra_trapezoid(np.ones_like(t), np.ones_like(t), h)
    assert np.max(np.abs(y - np.exp(-t))) < 1e-6
    # second order
    y2 = kernels.volterra_trapezoid(np.ones(t[::2].size), np.ones(t[::2].size), 2 * h)
    e1 = np.max(np.abs(y - np.exp(-t)))
    e2 = np.max(np.abs(y2 - np.exp(-t[::2])))
    assert e2 / e1 == pytest.approx(4.0, rel=0.05)


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")
