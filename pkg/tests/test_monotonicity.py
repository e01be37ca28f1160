import numpy as np
import pytest

from price_mfg.errors import ConfigError, DomainError
from price_mfg.model import AnalyticSupply, HamiltonianSpec, InitialDensity, SpaceGrid, TimeGrid
from price_mfg.monotonicity import (Triple, apply_A, bregman_integrand, gap_parts, laplacian,
                                    monotonicity_gap, pairing, random_triple, run_trials,
                                    space_divergence, space_gradient, time_derivative,
                                    time_weights)


@pytest.fixture
def setup():
    sp, ti = SpaceGrid(-3, 3, 41), TimeGrid(1.0, 20)
    m0 = InitialDensity.gaussian(sp, 0.0, 0.8).values
    uT = 0.5 * sp.nodes**2
    return sp, ti, m0, uT, AnalyticSupply.sinusoid(1.0, 2.0)


def test_divergence_is_minus_adjoint_of_gradient(setup):
    sp = setup[0]
    rng = np.random.default_rng(0)
    a, F = rng.normal(size=sp.n_x), rng.normal(size=sp.n_x)
    lhs = (space_gradient(a, sp.dx) * F) @ sp.volumes
    rhs = -(a * space_divergence(F, sp)) @ sp.volumes
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_laplacian_self_adjoint_and_conservative(setup):
    sp = setup[0]
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=sp.n_x), rng.normal(size=sp.n_x)
    assert (laplacian(a, sp) * b) @ sp.volumes == pytest.approx((a * laplacian(b, sp)) @ sp.volumes, abs=1e-10)
    assert laplacian(a, sp) @ sp.volumes == pytest.approx(0.0, abs=1e-10)
    np.testing.assert_allclose(laplacian(np.ones(sp.n_x), sp), 0.0, atol=1e-12)


def test_time_derivative_summation_by_parts(setup):
    ti = setup[1]
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=ti.n_t + 1), rng.normal(size=ti.n_t + 1)
    w = time_weights(ti)
    lhs = w @ (time_derivative(a, ti.dt) * b) + w @ (a * time_derivative(b, ti.dt))
    assert lhs == pytest.approx(a[-1] * b[-1] - a[0] * b[0], abs=1e-10)
    assert w.sum() == pytest.approx(ti.horizon)


@pytest.mark.parametrize("c,eps", [(1.0, 0.0), (2.5, 0.1)])
def test_gap_is_bregman_sum(setup, c, eps):
    sp, ti, m0, uT, Q = setup
    spec = HamiltonianSpec(c, epsilon=eps)
    rng = np.random.default_rng(3)
    w, v = random_triple(sp, ti, m0, uT, rng), random_triple(sp, ti, m0, uT, rng)
    gap = monotonicity_gap(w, v, spec, Q)
    part1, part2 = gap_parts(w, v, spec)
    assert abs(part1) < 1e-12
    assert gap == pytest.approx(part2, abs=1e-12)
    assert gap == pytest.approx(bregman_integrand(w, v, spec) / (2 * c), rel=1e-12)
    assert gap == pytest.approx(monotonicity_gap(v, w, spec, Q), rel=1e-12)
    assert monotonicity_gap(w, w, spec, Q) == 0.0


def test_random_triple_is_admissible(setup):
    sp, ti, m0, uT, _ = setup
    w = random_triple(sp, ti, m0, uT, np.random.default_rng(4))
    assert w.is_positive
    np.testing.assert_allclose(w.m @ sp.volumes, 1.0, atol=1e-12)
    np.testing.assert_array_equal(w.m[0], m0)
    np.testing.assert_array_equal(w.u[-1], uT)


def test_preconditions(setup):
    sp, ti, m0, uT, Q = setup
    spec = HamiltonianSpec(1.0)
    rng = np.random.default_rng(5)
    w = random_triple(sp, ti, m0, uT, rng)
    other = random_triple(sp, ti, m0, uT + 1.0, rng)
    with pytest.raises(DomainError, match="share"):
        monotonicity_gap(w, other, spec, Q)
    neg = Triple(sp, ti, w.m - 2 * w.m.max() * (np.arange(ti.n_t + 1) > 0)[:, None], w.u, w.varpi)
    with pytest.raises(DomainError, match="densities"):
        monotonicity_gap(w, neg, spec, Q)
    with pytest.raises(ConfigError):
        Triple(sp, ti, w.m[:-1], w.u, w.varpi)


def test_apply_A_balance_row(setup):
    sp, ti, m0, uT, Q = setup
    spec = HamiltonianSpec(2.0)
    w = random_triple(sp, ti, m0, uT, np.random.default_rng(6))
    rows = apply_A(w, spec, Q)
    p = w.varpi[:, None] + space_gradient(w.u, sp.dx)
    np.testing.assert_allclose(rows.varpi, (w.m * p / 2.0) @ sp.volumes + Q(ti.nodes))
    assert pairing(w, w) > 0


def test_run_trials_report(setup):
    sp, ti, m0, uT, Q = setup
    rep = run_trials(HamiltonianSpec(1.0), Q, sp, ti, m0, uT, n_trials=50, seed=11)
    assert rep["trials"] == 50 and rep["violations"] == 0 and rep["min_gap"] >= 0
    again = run_trials(HamiltonianSpec(1.0), Q, sp, ti, m0, uT, n_trials=50, seed=11)
    assert again == rep
