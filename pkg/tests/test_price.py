import numpy as np
import pytest

from price_mfg.errors import ConfigError, DomainError, InconsistencyError, NonConvergence
from price_mfg.lq import solve_lq_quadratic_terminal
from price_mfg.model import (AnalyticSupply, HamiltonianSpec, InitialDensity, PotentialSpec,
                             PricePath, SpaceGrid, SupplySchedule, TerminalCost, TimeGrid,
                             ValueField, DensityField)
from price_mfg.price import (FixedPointConfig, balance_residual, balancing_price,
                             energy_estimate_diagnostic, initial_price, integrate_price_ode,
                             price_map, solve_equilibrium, write_convergence_log, write_price_csv)


@pytest.fixture(scope="module")
def small_lq():
    Q = AnalyticSupply.sinusoid(1.0, 2 * np.pi / 4.0, horizon=4.0)
    sp, ti = SpaceGrid(-3.0, 5.0, 81), TimeGrid(4.0, 80)
    spec = HamiltonianSpec(2.0)
    term = TerminalCost.quadratic(1.0, 0.0)
    init = InitialDensity.gaussian(sp, 0.0, 0.5)
    sol = solve_equilibrium(spec, term, init, Q, sp, ti)
    oracle = solve_lq_quadratic_terminal(2.0, 1.0, 0.0, init.mean, Q, 4.0, n_t=ti.n_t)
    return dict(Q=Q, sp=sp, ti=ti, spec=spec, term=term, init=init, sol=sol, oracle=oracle)


# --- initial balancing price --------------------------------------------------

def test_initial_price_linear_closed_form():
    sp = SpaceGrid(-3, 3, 61)
    init = InitialDensity.gaussian(sp, 0.4, 0.8)
    ux = np.sin(sp.nodes) + 0.3 * sp.nodes
    th = initial_price(HamiltonianSpec(1.5), ux, init, 0.7)
    assert th == pytest.approx(-1.5 * 0.7 - sp.integrate(ux * init.values), abs=1e-11)


@pytest.mark.parametrize("c,q0,expected", [(1.0, 0.0, 0.0), (2.0, 1.0, -2.0)])
def test_initial_price_at_rest(c, q0, expected):
    sp = SpaceGrid(-3, 3, 61)
    init = InitialDensity.gaussian(sp, 0.0, 1.0)
    assert initial_price(HamiltonianSpec(c), np.zeros(sp.n_x), init, q0) == pytest.approx(expected, abs=1e-12)


def test_balancing_price_rejects_nonfinite():
    with pytest.raises(DomainError):
        balancing_price(HamiltonianSpec(1.0), np.array([np.nan]), np.ones(1), np.zeros(1), 0.0)


# --- price ODE ----------------------------------------------------------------

def _frozen_fields(sp, ti, m_row):
    u = ValueField(sp, ti, np.zeros((ti.n_t + 1, sp.n_x)))
    m = DensityField(sp, ti, np.tile(m_row, (ti.n_t + 1, 1)))
    return u, m


def test_price_ode_recovers_affine_law():
    sp, ti = SpaceGrid(-3, 3, 61), TimeGrid(4.0, 80)
    Q = AnalyticSupply.sinusoid(1.0, 2 * np.pi / 4.0, horizon=4.0)
    u, m = _frozen_fields(sp, ti, InitialDensity.gaussian(sp, 0.0, 1.0).values)
    th = integrate_price_ode(HamiltonianSpec(2.0), u, m, Q, 0.5)
    np.testing.assert_allclose(th.values, 0.5 - 2.0 * (Q(ti.nodes) - Q(0.0)), atol=1e-6)


def test_price_ode_constant_supply():
    sp, ti = SpaceGrid(-3, 3, 61), TimeGrid(1.0, 20)
    Q = SupplySchedule([0.0, 1.0], [0.3, 0.3], "linear")
    u, m = _frozen_fields(sp, ti, InitialDensity.gaussian(sp, 0.0, 1.0).values)
    th = integrate_price_ode(HamiltonianSpec(2.0), u, m, Q, -0.6)
    np.testing.assert_allclose(th.values, -0.6, atol=1e-14)


def test_price_ode_symmetric_potential_term_vanishes():
    sp, ti = SpaceGrid(-4, 4, 161), TimeGrid(4.0, 80)
    Q = AnalyticSupply.sinusoid(1.0, 2 * np.pi / 4.0, horizon=4.0)
    spec = HamiltonianSpec(2.0, PotentialSpec.quadratic(0.8, 0.5))
    u, m = _frozen_fields(sp, ti, InitialDensity.gaussian(sp, 0.5, 0.6).values)
    th = integrate_price_ode(spec, u, m, Q, 0.0)
    np.testing.assert_allclose(th.values, -2.0 * (Q(ti.nodes) - Q(0.0)), atol=1e-6)


# --- fixed point ---------------------------------------------------------------

def test_lq_equilibrium_matches_closed_form(small_lq):
    sol, oracle = small_lq["sol"], small_lq["oracle"]
    amp = 2.0  # c * supply amplitude
    assert np.max(np.abs(sol.varpi.values - oracle.price.values)) <= 2e-2 * amp
    assert sol.balance_sup <= 1e-3


def test_lq_three_iterations_reach_discretisation_level(small_lq):
    d = small_lq
    cfg = FixedPointConfig(max_iters=3, tol_price=1e-8)
    with pytest.raises(NonConvergence) as info:
        solve_equilibrium(d["spec"], d["term"], d["init"], d["Q"], d["sp"], d["ti"], cfg)
    it, change, bal = info.value.history[-1]
    assert it == 3
    assert bal <= 1e-3
    # the third update is already an order of magnitude below the discretisation error
    disc = np.max(np.abs(d["sol"].varpi.values - d["oracle"].price.values))
    assert change < 0.1 * disc


def test_trivial_equilibrium():
    sp, ti = SpaceGrid(-3, 3, 61), TimeGrid(1.0, 20)
    rng = np.random.default_rng(3)
    init = InitialDensity.from_values(sp, rng.uniform(0.1, 1.0, sp.n_x))
    Q = SupplySchedule([0.0, 1.0], [0.0, 0.0])
    sol = solve_equilibrium(HamiltonianSpec(1.0), TerminalCost.quadratic(0.0, 0.0), init, Q, sp, ti)
    assert np.max(np.abs(sol.varpi.values)) == 0.0
    assert np.max(np.abs(sol.u.values)) == 0.0
    np.testing.assert_array_equal(sol.m.values, np.tile(init.values, (ti.n_t + 1, 1)))
    assert energy_estimate_diagnostic(HamiltonianSpec(1.0), sol) == 0.0


def test_fixed_point_consistency(small_lq):
    d = small_lq
    theta, *_ = price_map(d["spec"], d["term"], d["init"], d["Q"], d["sol"].varpi, d["sp"], d["ti"])
    assert np.max(np.abs(theta.values - d["sol"].varpi.values)) <= 2 * 1e-8


def test_uniqueness_from_two_guesses(small_lq):
    d = small_lq
    guess = PricePath(d["ti"], np.full(d["ti"].n_t + 1, 3.0))
    other = solve_equilibrium(d["spec"], d["term"], d["init"], d["Q"], d["sp"], d["ti"],
                              initial_guess=guess)
    assert np.max(np.abs(other.varpi.values - d["sol"].varpi.values)) <= 2 * 1e-8


def test_energy_constant_price():
    # constant supply, flat terminal cost: every agent trades at -Q, price -cQ
    c, q0 = 1.5, 0.4
    sp, ti = SpaceGrid(-3, 3, 61), TimeGrid(2.0, 40)
    init = InitialDensity.gaussian(sp, 0.0, 0.5)
    Q = SupplySchedule([0.0, 2.0], [q0, q0], "linear")
    spec = HamiltonianSpec(c)
    sol = solve_equilibrium(spec, TerminalCost.quadratic(0.0, 0.0), init, Q, sp, ti)
    np.testing.assert_allclose(sol.varpi.values, -c * q0, atol=1e-10)
    w0 = -c * q0
    expected = ti.horizon * (w0**2 / (2 * c)) * 2
    assert energy_estimate_diagnostic(spec, sol) == pytest.approx(expected, rel=1e-6)


def test_energy_stable_under_refinement():
    vals = []
    for n in (1, 2):
        Q = AnalyticSupply.sinusoid(1.0, 2 * np.pi / 4.0, horizon=4.0)
        sp, ti = SpaceGrid(-3.0, 5.0, 80 * n + 1), TimeGrid(4.0, 80 * n)
        init = InitialDensity.gaussian(sp, 0.0, 0.5)
        sol = solve_equilibrium(HamiltonianSpec(2.0), TerminalCost.quadratic(1.0, 0.0), init, Q, sp, ti)
        vals.append(energy_estimate_diagnostic(HamiltonianSpec(2.0), sol))
    assert np.all(np.isfinite(vals))
    assert abs(vals[0] - vals[1]) / abs(vals[1]) < 0.05


def test_nonconvergence_carries_history(small_lq):
    d = small_lq
    with pytest.raises(NonConvergence) as info:
        solve_equilibrium(d["spec"], d["term"], d["init"], d["Q"], d["sp"], d["ti"],
                          FixedPointConfig(max_iters=2))
    assert len(info.value.history) == 2


def test_ode_map_balance_gap_is_reported(small_lq):
    # the ODE map integrates the balance derivative and accumulates an O(dx) drift;
    # the converged price is close to the oracle but the balance check flags it
    d = small_lq
    with pytest.raises(InconsistencyError) as info:
        solve_equilibrium(d["spec"], d["term"], d["init"], d["Q"], d["sp"], d["ti"],
                          FixedPointConfig(price_map="ode"))
    sol = info.value.solution
    assert np.max(np.abs(sol.varpi.values - d["oracle"].price.values)) < 0.1
    assert 1e-3 < sol.balance_sup < 0.05


def test_balance_residual_definition(small_lq):
    sol, Q = small_lq["sol"], small_lq["Q"]
    r = balance_residual(sol.m, sol.drift, Q)
    np.testing.assert_allclose(r, sol.balance_residual)


def test_config_validation():
    for kw in (dict(damping=0), dict(tol_price=0), dict(max_iters=0), dict(price_map="x"),
               dict(momentum="x"), dict(drift_time="x")):
        with pytest.raises(ConfigError):
            FixedPointConfig(**kw)


def test_supply_must_cover_horizon(small_lq):
    d = small_lq
    short = SupplySchedule([0.0, 1.0], [0.0, 0.0])
    with pytest.raises(ConfigError):
        solve_equilibrium(d["spec"], d["term"], d["init"], short, d["sp"], d["ti"])


def test_writers(small_lq, tmp_path):
    sol = small_lq["sol"]
    write_price_csv(sol, tmp_path / "p.csv")
    write_convergence_log(sol.history, tmp_path / "c.csv")
    data = np.loadtxt(tmp_path / "p.csv", delimiter=",", skiprows=1)
    assert data.shape == (sol.varpi.grid.n_t + 1, 3)
    assert (tmp_path / "c.csv").read_text().startswith("iteration,price_change,balance_residual")
