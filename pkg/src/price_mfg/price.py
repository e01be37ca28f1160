"""Equilibrium price by fixed point on the price path.

Given a price iterate the HJB and FP solves give (u, m); the map returns the
price that balances supply against the agents' trading, either node by node
or through the price ODE started from the balancing initial price. The outer
loop is damped Picard iteration with Anderson acceleration.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConfigError, DomainError, InconsistencyError, NonConvergence
from .fp import DriftField, drift_from_value, momentum_field, solve_fp
from .hjb import HJBConfig, solve_hjb
from .model import (DensityField, HamiltonianSpec, InitialDensity, PricePath,
                    SpaceGrid, TerminalCost, TimeGrid, ValueField)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FixedPointConfig:
    damping: float = 0.5
    max_iters: int = 60
    tol_price: float = 1e-8
    tol_balance: float = 1e-3
    anderson_depth: int = 5
    price_map: str = "balance"
    momentum: str = "upwind"
    drift_time: str = "left"

    def __post_init__(self):
        if not (0 < self.damping <= 1):
            raise ConfigError("damping must lie in (0, 1]")
        if self.tol_price <= 0 or self.tol_balance <= 0:
            raise ConfigError("tolerances must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.price_map not in ("balance", "ode"):
            raise ConfigError(f"unknown price map {self.price_map!r}")
        if self.momentum not in ("upwind", "centered"):
            raise ConfigError(f"unknown momentum stencil {self.momentum!r}")
        if self.drift_time not in ("left", "average"):
            raise ConfigError(f"unknown drift_time {self.drift_time!r}")


@dataclass
class EquilibriumSolution:
    u: ValueField
    m: DensityField
    varpi: PricePath
    balance_residual: np.ndarray
    iterations: int
    drift: DriftField
    history: list = field(default_factory=list)

    @property
    def balance_sup(self) -> float:
        return float(np.max(np.abs(self.balance_residual)))


def balancing_price(spec: HamiltonianSpec, ux, weights, x, q, tol=1e-12, max_expansions=200):
    """Unique root v of  sum_i weights_i D_pH(x_i, v + ux_i) + q.

    D_pH is strictly increasing in p, so the root is bracketed by geometric
    expansion, narrowed by bisection and polished with Newton.
    """
    def F(v):
        return float(np.dot(weights, spec.Dp(x, v + ux))) + q

    def dF(v):
        return float(np.dot(weights, spec.Dpp(x, v + ux)))

    if not (np.all(np.isfinite(ux)) and np.isfinite(q)):
        raise DomainError("balancing price received non-finite data")
    lo, hi = -1.0, 1.0
    for _ in range(max_expansions):
        if F(lo) <= 0 <= F(hi):
            break
        lo, hi = 2.0 * lo, 2.0 * hi
    else:
        raise DomainError("could not bracket the balancing price")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if F(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-9 * max(1.0, abs(mid)):
            break
    v = 0.5 * (lo + hi)
    for _ in range(20):
        r = F(v)
        if abs(r) <= tol:
            break
        v -= r / dF(v)
    return v


def initial_price(spec: HamiltonianSpec, ux0, initial: InitialDensity, q0, tol=1e-12):
    """theta_0 with  int D_pH(x, theta_0 + u_x(x, 0)) m̄ dx = -Q(0)."""
    grid = initial.grid
    return balancing_price(spec, np.asarray(ux0, dtype=float), grid.volumes * initial.values,
                           grid.nodes, float(q0), tol)


def _ode_terms(spec, u, m, price):
    x = u.space.nodes
    p = price.values[:, None] + u.gradient()
    dpp = spec.Dpp(x, p)
    num = dpp * spec.Dx(x, p)
    if spec.epsilon > 0:
        uxx = np.gradient(u.gradient(), u.space.dx, axis=1, edge_order=2)
        num = num + spec.epsilon * spec.Dppp(x, p) * uxx**2
    return m.space.integrate(num * m.values, axis=1), m.space.integrate(dpp * m.values, axis=1)


def integrate_price_ode(spec: HamiltonianSpec, u: ValueField, m: DensityField, supply,
                        theta0: float, price: PricePath | None = None) -> PricePath:
    """RK4 for  v' = (-Q' - int (H_pp H_x + eps H_ppp u_xx^2) m) / int H_pp m."""
    time = u.time
    if price is None:
        price = PricePath.constant(time, theta0)
    num, den = _ode_terms(spec, u, m, price)
    floor = 0.5 * spec.theta
    if np.any(den < floor):
        k = int(np.argmin(den))
        raise DomainError(f"degenerate mass: int D_ppH m = {den[k]:.3g} at time index {k}")
    t = time.nodes
    dt = time.dt
    mid_t = t[:-1] + 0.5 * dt
    g = (-supply.derivative(t) - num) / den
    g_mid = (-supply.derivative(mid_t) - 0.5 * (num[1:] + num[:-1])) / (0.5 * (den[1:] + den[:-1]))
    incr = dt / 6.0 * (g[:-1] + 4.0 * g_mid + g[1:])
    return PricePath(time, theta0 + np.concatenate(([0.0], np.cumsum(incr))))


def balance_residual(m: DensityField, drift: DriftField, supply):
    """r(t) = int D_pH(x, price + u_x) m dx + Q(t), with the transported momentum.

    The drift is -D_pH at the momentum the FP step actually used, so this is
    production minus the rate at which the agents absorb energy.
    """
    return -m.space.integrate(drift.values * m.values, axis=1) + supply(m.time.nodes)


def centered_balance_residual(spec: HamiltonianSpec, u: ValueField, m: DensityField,
                              price: PricePath, supply):
    """Same residual with centered u_x (differs from the above by O(dx))."""
    p = price.values[:, None] + u.gradient()
    return m.space.integrate(spec.Dp(u.space.nodes, p) * m.values, axis=1) + supply(u.time.nodes)


def _solve_pair(spec, terminal, initial, price, space, time, hjb_config, momentum, drift_time):
    u = solve_hjb(spec, terminal, price, space, time, hjb_config)
    drift = drift_from_value(u, price, spec, momentum)
    m = solve_fp(drift, initial, spec.epsilon, space, time, drift_time=drift_time)
    return u, m, drift


def price_map(spec, terminal, initial, supply, price, space, time, hjb_config=None,
              mode="balance", momentum="upwind", drift_time="left"):
    """One application of  price -> theta(price); returns (theta, u, m, drift).

    ``mode="ode"``: balancing initial price, then the price ODE.
    ``mode="balance"``: balancing price at every node, with the same momentum
    stencil the transport step uses.
    """
    u, m, drift = _solve_pair(spec, terminal, initial, price, space, time, hjb_config,
                              momentum, drift_time)
    if mode == "ode":
        th0 = initial_price(spec, u.gradient()[0], initial, float(supply(0.0)))
        theta = integrate_price_ode(spec, u, m, supply, th0, price)
    elif mode == "balance":
        x = space.nodes
        ux = momentum_field(u, price, momentum) - price.values[:, None]
        w = space.volumes * m.values
        q = supply(time.nodes)
        theta = PricePath(time, [balancing_price(spec, ux[k], w[k], x, float(q[k]))
                                 for k in range(time.n_t + 1)])
    else:
        raise ConfigError(f"unknown price map {mode!r}")
    return theta, u, m, drift


def default_initial_guess(spec, terminal, initial, supply, time):
    """-c Q(t) shifted so the terminal slope balances Q(0)."""
    x = initial.grid.nodes
    v0 = initial_price(spec, terminal.derivative(x), initial, float(supply(0.0)))
    t = time.nodes
    return PricePath(time, v0 - spec.c * (supply(t) - supply(0.0)))


def solve_equilibrium(spec: HamiltonianSpec, terminal: TerminalCost, initial: InitialDensity,
                      supply, space: SpaceGrid, time: TimeGrid,
                      config: FixedPointConfig | None = None,
                      hjb_config: HJBConfig | None = None,
                      initial_guess: PricePath | None = None) -> EquilibriumSolution:
    cfg = config or FixedPointConfig()
    if not supply.covers(time.horizon):
        raise ConfigError("supply schedule does not cover [0, T]")
    price = initial_guess or default_initial_guess(spec, terminal, initial, supply, time)
    x = price.values.copy()
    lam = cfg.damping
    X_hist, F_hist = [], []
    history = []
    prev_norm = np.inf
    for it in range(1, cfg.max_iters + 1):
        cur = PricePath(time, x)
        theta, u, m, drift = price_map(spec, terminal, initial, supply, cur, space, time,
                                       hjb_config, cfg.price_map, cfg.momentum, cfg.drift_time)
        f = theta.values - x
        change = float(np.max(np.abs(f)))
        bal = float(np.max(np.abs(balance_residual(m, drift, supply))))
        history.append((it, change, bal))
        log.debug("fixed point iter %d: change %.3e balance %.3e", it, change, bal)
        if change <= cfg.tol_price:
            res = balance_residual(m, drift, supply)
            sol = EquilibriumSolution(u, m, cur, res, it, drift, history)
            if sol.balance_sup > cfg.tol_balance:
                err = InconsistencyError(
                    f"price converged but balance residual {sol.balance_sup:.3g} exceeds "
                    f"{cfg.tol_balance:.3g}")
                err.solution = sol
                raise err
            return sol
        if change > prev_norm:
            # residual grew: shrink the step and restart the history
            lam = max(0.5 * lam, 1e-3)
            X_hist, F_hist = [], []
        prev_norm = change
        X_hist.append(x.copy())
        F_hist.append(f.copy())
        X_hist, F_hist = X_hist[-(cfg.anderson_depth + 1):], F_hist[-(cfg.anderson_depth + 1):]
        if len(F_hist) > 1:
            dF = np.diff(np.array(F_hist), axis=0).T
            dX = np.diff(np.array(X_hist), axis=0).T
            gamma, *_ = np.linalg.lstsq(dF, f, rcond=None)
            x = x + lam * f - (dX + lam * dF) @ gamma
        else:
            x = x + lam * f
    raise NonConvergence(f"price iteration did not converge in {cfg.max_iters} iterations",
                         history)


def energy_estimate_diagnostic(spec: HamiltonianSpec, sol: EquilibriumSolution):
    """int_0^T int H(x, price + u_x) (m̄ + m) dx dt."""
    x = sol.u.space.nodes
    p = sol.varpi.values[:, None] + sol.u.gradient()
    integrand = spec.H(x, p) * (sol.m.values[0][None, :] + sol.m.values)
    val = trapezoid(sol.m.space.integrate(integrand, axis=1), sol.u.time.nodes)
    if not np.isfinite(val):
        raise InconsistencyError("energy estimate is not finite")
    return float(val)


def write_convergence_log(history, path):
    np.savetxt(path, np.asarray(history, dtype=float).reshape(-1, 3), delimiter=",",
               header="iteration,price_change,balance_residual", comments="", fmt="%.12g")


def write_price_csv(sol: EquilibriumSolution, path):
    data = np.column_stack([sol.varpi.grid.nodes, sol.varpi.values, sol.balance_residual])
    np.savetxt(path, data, delimiter=",", header="t,price,residual", comments="", fmt="%.12g")
