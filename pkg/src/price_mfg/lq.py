"""Linear-quadratic price models.

Two cases have (semi-)closed forms:

* no potential, quadratic terminal cost: the price is affine in the supply,
  ``price(t) = Theta - c Q(t)``, and every agent mean-reverts to the crowd;
* quadratic potential ``eta/2 (x - kappa)^2``: the first moments obey a linear
  ODE system, the price solves a Volterra equation with kernel
  ``k(t) = w sinh(w t)``, ``w = sqrt(eta / c)``, and the value function is a
  quadratic polynomial in x whose coefficients solve Riccati-type ODEs.

The wear constant c is carried explicitly throughout.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid, solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from . import kernels
from .errors import ConfigError, DomainError, InconsistencyError
from .model import AnalyticSupply, InitialDensity, PricePath, TerminalCost, TimeGrid


def _check_positive(name, value, strict=True):
    ok = value > 0 if strict else value >= 0
    if not (np.isfinite(value) and ok):
        raise DomainError(f"{name} must be {'positive' if strict else 'non-negative'}, got {value}")


@dataclass
class LQSolution:
    """Closed-form equilibrium of the potential-free model.

    Attributes
    ----------
    Theta : float
        Constant price level; ``price(t) = Theta - c Q(t)``.
    price : PricePath
        The price sampled on the requested time grid.
    mu_of_x : callable
        ``mu(x, t)``: optimal shift of the terminal state, the minimiser in
        the Hopf-Lax type representation of u.
    value : callable
        ``u(x, t)`` for this Theta.
    u_x : callable
        Spatial derivative of ``value``.
    mean_path : callable
        ``xbar(t) = xbar(0) + int_0^t Q``.
    """

    Theta: float
    price: PricePath
    mu_of_x: Callable
    value: Callable
    u_x: Callable
    mean_path: Callable
    c: float
    supply: object
    horizon: float
    params: dict = field(default_factory=dict)

    def price_at(self, t):
        return self.Theta - self.c * self.supply(np.asarray(t, dtype=float))


def _supply_tools(Q, horizon):
    if not Q.covers(horizon):
        raise ConfigError("supply schedule does not cover [0, T]")

    def K(t):
        return Q.tail(np.asarray(t, dtype=float), horizon)

    t_fine = np.linspace(0.0, horizon, 2049)
    q2 = CubicSpline(t_fine, Q(t_fine) ** 2).antiderivative()

    def tail_sq(t):
        # int_t^T Q^2 ds through a fine cubic spline of Q^2
        return q2(horizon) - q2(np.asarray(t, dtype=float))

    return K, tail_sq


def solve_lq_quadratic_terminal(c, gamma, zeta, xbar, Q, horizon, n_t=480) -> LQSolution:
    """Explicit solution for ``ū(y) = gamma/2 (y - zeta)^2`` and no potential."""
    _check_positive("c", c)
    _check_positive("gamma", gamma, strict=False)
    K, tail_sq = _supply_tools(Q, horizon)
    K0 = float(K(0.0))
    Theta = -gamma * (K0 + xbar - zeta)
    T = float(horizon)

    def denom(t):
        return 1.0 + gamma * (T - np.asarray(t, dtype=float)) / c

    def mu(x, t=0.0):
        return -(gamma * (K(t) + np.asarray(x) - zeta) + Theta) / denom(t)

    def value(x, t):
        y = K(t) + np.asarray(x) - zeta
        s = (np.asarray(t) - T) / c
        quad = (gamma * y**2 + s * Theta * (2.0 * gamma * y + Theta)) / (2.0 * denom(t))
        return quad + Theta * K(t) - c * 0.5 * tail_sq(t)

    def u_x(x, t):
        return gamma * (K(t) + np.asarray(x) - zeta - (T - np.asarray(t)) * Theta / c) / denom(t)

    def mean_path(t):
        return xbar + Q.integral(np.asarray(t, dtype=float))

    grid = TimeGrid(T, n_t)
    price = PricePath(grid, Theta - c * Q(grid.nodes))
    return LQSolution(Theta, price, mu, value, u_x, mean_path, c, Q, T,
                      dict(gamma=gamma, zeta=zeta, xbar=xbar, K0=K0))


def _solve_mu(terminal: TerminalCost, Theta, x, shift, scale, tol=1e-13):
    """Root of  mu + ū'(x + scale*mu + shift) = -Theta  for every x (vectorised bisection)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))

    def g(mu):
        return mu + terminal.derivative(x + scale * mu + shift) + Theta

    lo = -np.ones_like(x)
    hi = np.ones_like(x)
    for _ in range(200):
        bad_lo, bad_hi = g(lo) > 0, g(hi) < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        lo = np.where(bad_lo, 2.0 * lo, lo)
        hi = np.where(bad_hi, 2.0 * hi, hi)
    else:
        raise DomainError("could not bracket mu(Theta)")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        neg = g(mid) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
        if np.max(hi - lo) <= tol * max(1.0, np.max(np.abs(mid))):
            break
    return 0.5 * (lo + hi)


def lq_general_terminal(c, terminal: TerminalCost, initial, Q, horizon, n_t=480,
                        tol=1e-12) -> LQSolution:
    """Potential-free LQ model with a general convex terminal cost.

    ``initial`` is an :class:`InitialDensity` or a scalar mean (a point mass).
    Theta solves  Theta = -int u_x(x, 0) m0 dx  where, by the envelope
    theorem, ``u_x = ū'(x(T)) = -Theta - mu``; equivalently  int mu m0 = 0.
    """
    _check_positive("c", c)
    if not terminal.is_convex():
        raise DomainError("terminal cost is not convex: mu(Theta) need not be unique")
    K, tail_sq = _supply_tools(Q, horizon)
    T = float(horizon)
    if isinstance(initial, InitialDensity):
        xs, ws = initial.grid.nodes, initial.grid.volumes * initial.values
    else:
        xs, ws = np.array([float(initial)]), np.array([1.0])
    xbar = float(np.dot(xs, ws))
    K0 = float(K(0.0))

    def closure(Theta):
        return float(np.dot(ws, _solve_mu(terminal, Theta, xs, K0, T / c)))

    # closure(Theta) is non-increasing in Theta; bracket and solve
    a, b = -1.0, 1.0
    for _ in range(200):
        if closure(a) >= 0 >= closure(b):
            break
        a, b = 2.0 * a, 2.0 * b
    else:
        raise DomainError("could not bracket Theta")
    Theta = brentq(closure, a, b, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)

    def mu(x, t=0.0):
        t = float(t)
        return _solve_mu(terminal, Theta, x, float(K(t)), (T - t) / c)

    def value(x, t):
        t = float(t)
        m_ = mu(x, t)
        tau = T - t
        Kt = float(K(t))
        run = tau * m_**2 / (2 * c) + tau * Theta * m_ / c + Theta * Kt - 0.5 * c * tail_sq(t)
        return run + terminal.value(np.asarray(x) + m_ * tau / c + Kt)

    def u_x(x, t):
        return -Theta - mu(x, t)

    def mean_path(t):
        return xbar + Q.integral(np.asarray(t, dtype=float))

    grid = TimeGrid(T, n_t)
    price = PricePath(grid, Theta - c * Q(grid.nodes))
    return LQSolution(Theta, price, mu, value, u_x, mean_path, c, Q, T,
                      dict(xbar=xbar, K0=K0, closure_residual=closure(Theta)))


def _rk4(rhs, y0, t):
    y = np.empty((t.size,) + np.shape(y0))
    y[0] = y0
    for k in range(t.size - 1):
        h = t[k + 1] - t[k]
        k1 = rhs(t[k], y[k])
        k2 = rhs(t[k] + h / 2, y[k] + h / 2 * k1)
        k3 = rhs(t[k] + h / 2, y[k] + h / 2 * k2)
        k4 = rhs(t[k + 1], y[k] + h * k3)
        y[k + 1] = y[k] + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def agent_trajectory(c, gamma, horizon, Q, x0, xbar, n_t=480):
    """RK4 for the closed agent/mean system of the potential-free model.

        x'    = gamma (xbar(t) - x) / (c + gamma (T - t)) + Q(t)
        xbar' = Q(t)

    ``x0`` may be an array (an ensemble). Returns ``(t, x, xbar)``.
    """
    _check_positive("c", c)
    T = float(horizon)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = x0.size

    def rhs(t, y):
        q = float(Q(t))
        out = np.empty_like(y)
        out[:n] = gamma * (y[n] - y[:n]) / (c + gamma * (T - t)) + q
        out[n] = q
        return out

    t = np.linspace(0.0, T, n_t + 1)
    y = _rk4(rhs, np.concatenate([x0, [float(xbar)]]), t)
    return t, y[:, :n], y[:, n]


def closed_loop_trajectory(sol: LQSolution, x0, n_t=480):
    """RK4 for  x' = -(price(t) + u_x(x, t)) / c  using the solution's feedback."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))

    def rhs(t, x):
        return -(sol.price_at(t) + sol.u_x(x, t)) / sol.c

    t = np.linspace(0.0, sol.horizon, n_t + 1)
    return t, _rk4(rhs, x0, t)


# ---------------------------------------------------------------------------
# quadratic potential


def volterra_kernel(t, omega):
    """k(t) = w sinh(w t); the price solves  p = f - k * p."""
    return omega * np.sinh(omega * np.asarray(t, dtype=float))


def solve_volterra(forcing, omega, dt):
    """Trapezoidal product integration of  p(t) = f(t) - int_0^t k(t-s) p(s) ds."""
    f = np.asarray(forcing, dtype=float)
    kern = volterra_kernel(dt * np.arange(f.size), omega)
    return kernels.volterra_trapezoid(f, kern, dt)


def laplace_volterra(poly=(), exponentials=(), omega=1.0):
    """Closed-form solution for forcing  f = polynomial + sum a e^{b t}.

    With L{k} = w^2 / (s^2 - w^2) the transformed equation gives
    L{p} = L{f} (1 - w^2 / s^2), i.e.  p = f - w^2 int_0^t (t - s) f(s) ds.
    """
    f = AnalyticSupply(poly, exponentials)

    def p(t):
        return f(t) - omega**2 * f.double_integral(t)

    return p


@dataclass
class PotentialModelState:
    """Moments, Volterra data and value-function coefficients of the potential model."""

    t: np.ndarray
    price: np.ndarray
    Pi: np.ndarray
    Xi: np.ndarray
    xbar_path: np.ndarray
    Pi0: float
    Pi0_dot: float
    omega: float
    C1: float
    C2: float
    kernel: np.ndarray
    forcing: np.ndarray
    theta0: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    route: str
    closure_residual: float
    c: float = 1.0
    eta: float = 0.0
    kappa: float = 0.0
    theta_ode: object = field(default=None, repr=False)

    def to_json(self):
        return {"Pi0": self.Pi0, "Pi0_dot": self.Pi0_dot, "C1": self.C1, "C2": self.C2,
                "omega": self.omega, "route": self.route,
                "closure_residual": self.closure_residual,
                "Theta_equivalent": -self.Pi0}


def _theta_odes(c, eta, kappa, gamma, zeta, horizon, price_fn, rtol=1e-12, atol=1e-13):
    """Backward solve of the coefficient ODEs of u = th0 + th1 x + th2 x^2."""

    def rhs(t, y):
        th0, th1, th2 = y
        p = price_fn(t)
        return [(p + th1) ** 2 / (2 * c) - 0.5 * eta * kappa**2,
                2 * th2 * (p + th1) / c + eta * kappa,
                2 * th2**2 / c - 0.5 * eta]

    yT = [0.5 * gamma * zeta**2, -gamma * zeta, 0.5 * gamma]
    sol = solve_ivp(rhs, (horizon, 0.0), yT, method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True)
    if not sol.success:
        raise InconsistencyError(f"coefficient ODEs failed: {sol.message}")
    return sol


def solve_potential_model(c, eta, kappa, gamma, zeta, xbar, Q, horizon, n_t=480,
                          route="volterra", max_omega_dt=0.5):
    """Equilibrium of the quadratic-potential LQ model.

    Parameters
    ----------
    route : {"volterra", "laplace"}
        ``"volterra"`` solves the integral equation with the trapezoidal rule
        on ``n_t`` steps; ``"laplace"`` uses the closed form and needs an
        :class:`AnalyticSupply`.

    Returns
    -------
    (PotentialModelState, PricePath)
    """
    _check_positive("c", c)
    _check_positive("eta", eta, strict=False)
    if route not in ("volterra", "laplace"):
        raise ConfigError(f"unknown route {route!r}")
    if route == "laplace" and not isinstance(Q, AnalyticSupply):
        raise ConfigError("the Laplace route needs an analytic (polynomial/exponential) supply")
    if not Q.covers(horizon):
        raise ConfigError("supply schedule does not cover [0, T]")
    grid = TimeGrid(horizon, n_t)
    t, dt = grid.nodes, grid.dt
    omega = float(np.sqrt(eta / c))
    if omega * dt > max_omega_dt:
        raise ConfigError(f"time step {dt:.3g} too large for sqrt(eta/c) = {omega:.3g}; refine n_t")
    Pi0_dot = -eta * (xbar - kappa)
    kern = volterra_kernel(t, omega)
    q = Q(t)

    def homogeneous(tt, Pi0):
        tt = np.asarray(tt, dtype=float)
        sh = np.sinh(omega * tt) / omega if omega > 0 else tt
        return Pi0 * np.cosh(omega * tt) + Pi0_dot * sh

    def price_for(Pi0):
        if route == "laplace":
            def fn(tt):
                return (-Pi0 - Pi0_dot * tt - c * Q(tt) + eta * Q.double_integral(tt))
            return fn(t), fn
        p = solve_volterra(-homogeneous(t, Pi0) - c * q, omega, dt)
        spline = CubicSpline(t, p)
        return p, lambda tt: float(spline(tt))

    def residual(Pi0):
        _, fn = price_for(Pi0)
        th = _theta_odes(c, eta, kappa, gamma, zeta, horizon, fn)
        th1, th2 = th.sol(0.0)[1:]
        return th1 + 2 * th2 * xbar - Pi0

    # bracket around the eta = 0 closed form
    guess = gamma * (float(Q.tail(0.0, horizon)) + xbar - zeta)
    width = max(1.0, abs(guess))
    lo, hi = guess - width, guess + width
    r_lo, r_hi = residual(lo), residual(hi)
    for _ in range(60):
        if r_lo * r_hi <= 0:
            break
        width *= 2.0
        lo, hi = guess - width, guess + width
        r_lo, r_hi = residual(lo), residual(hi)
    else:
        raise DomainError("could not bracket Pi(0)")
    probe = [residual(v) for v in np.linspace(lo, hi, 5)]
    if not (np.all(np.diff(probe) < 0) or np.all(np.diff(probe) > 0)):
        raise InconsistencyError("closure residual is not monotone in Pi(0)")
    Pi0 = brentq(residual, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)

    price, fn = price_for(Pi0)
    th = _theta_odes(c, eta, kappa, gamma, zeta, horizon, fn)
    coeffs = th.sol(t)
    Pi = -price - c * q
    xbar_path = xbar + Q.integral(t)
    Xi = xbar + cumulative_trapezoid(-(price + Pi) / c, t, initial=0.0)
    if omega > 0:
        C1 = 0.5 * (Pi0 + Pi0_dot / omega)
        C2 = 0.5 * (Pi0 - Pi0_dot / omega)
    else:
        C1, C2 = Pi0, 0.0
    state = PotentialModelState(
        t=t, price=price, Pi=Pi, Xi=Xi, xbar_path=xbar_path, Pi0=float(Pi0),
        Pi0_dot=float(Pi0_dot), omega=omega, C1=float(C1), C2=float(C2), kernel=kern,
        forcing=-homogeneous(t, Pi0) - c * q, theta0=coeffs[0], theta1=coeffs[1],
        theta2=coeffs[2], route=route, closure_residual=float(residual(Pi0)), c=c, eta=eta,
        kappa=kappa, theta_ode=th)
    return state, PricePath(grid, price)


def volterra_residual(state: PotentialModelState):
    """sup |p - f + k * p| with the convolution evaluated by the trapezoid rule."""
    p, f, k = state.price, state.forcing, state.kernel
    dt = state.t[1] - state.t[0]
    conv = np.array([_trap_conv(k, p, i, dt) for i in range(p.size)])
    return float(np.max(np.abs(p - f + conv)))


def _trap_conv(k, p, i, dt):
    if i == 0:
        return 0.0
    w = np.ones(i + 1)
    w[0] = w[-1] = 0.5
    return dt * float(np.dot(w, k[i::-1] * p[: i + 1]))


def moment_consistency(solution, spec=None):
    """Sup-norm residuals of  Pi' = -eta (Xi - kappa)  and  Xi' = -(price + Pi) / c.

    ``solution`` is a :class:`PotentialModelState`, or an equilibrium from the
    general solver together with its ``HamiltonianSpec`` (the moments are then
    computed from the u and m fields).
    """
    if isinstance(solution, PotentialModelState):
        c, eta, kappa = solution.c, solution.eta, solution.kappa
        t, Pi, Xi, price = solution.t, solution.Pi, solution.Xi, solution.price
    else:
        if spec is None:
            raise ConfigError("the model spec is required for a general equilibrium")
        c, eta, kappa = spec.c, 0.0, 0.0
        if spec.potential.kind == "quadratic":
            eta, kappa = spec.potential.eta, spec.potential.kappa
        elif spec.potential.kind != "zero":
            raise ConfigError("moment identities need a zero or quadratic potential")
        u, m = solution.u, solution.m
        t = u.time.nodes
        Pi = m.space.integrate(u.gradient() * m.values, axis=1)
        Xi = m.mean()
        price = solution.varpi.values
    dPi = np.gradient(Pi, t, edge_order=2)
    dXi = np.gradient(Xi, t, edge_order=2)
    return {"Pi": float(np.max(np.abs(dPi + eta * (Xi - kappa)))),
            "Xi": float(np.max(np.abs(dXi + (price + Pi) / c)))}


def write_lq_csv(sol: LQSolution, path):
    t = sol.price.grid.nodes
    data = np.column_stack([t, sol.price.values, sol.mean_path(t)])
    np.savetxt(path, data, delimiter=",", header="t,price,mean", comments="", fmt="%.12g")


def write_potential_csv(state: PotentialModelState, path):
    data = np.column_stack([state.t, state.price, state.Xi, state.Pi, state.xbar_path])
    np.savetxt(path, data, delimiter=",", header="t,price,Xi,Pi,xbar", comments="", fmt="%.12g")


def write_potential_json(state: PotentialModelState, path):
    with open(path, "w") as fh:
        json.dump(state.to_json(), fh, indent=2, sort_keys=True)
