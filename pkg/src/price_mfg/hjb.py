"""Backward Hamilton-Jacobi-Bellman solver for the agent value function.

Solves  -u_t + H(x, price(t) + u_x) = eps u_xx,  u(x, T) = ū(x)  on a truncated
interval. The default scheme is explicit Godunov upwinding for the kinetic
part with CFL sub-stepping; diffusion (eps > 0) is treated implicitly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import interp1d

from . import kernels
from .errors import ConfigError, NumericalBlowUp
from .model import (HamiltonianSpec, PricePath, SpaceGrid, TerminalCost,
                    TimeGrid, ValueField, second_difference)


@dataclass(frozen=True)
class HJBConfig:
    scheme: str = "upwind_godunov"
    cfl_safety: float = 0.9
    max_substeps: int = 20000
    sl_controls: int = 41

    def __post_init__(self):
        if not (0 < self.cfl_safety <= 1):
            raise ConfigError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if self.scheme not in ("upwind_godunov", "semi_lagrangian"):
            raise ConfigError(f"unknown HJB scheme {self.scheme!r}")


def _boundary_slopes(u, dx):
    g0 = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dx)
    gn = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * dx)
    return g0, gn


def implicit_diffusion_hjb(u, eps, dx, dt):
    """Solve (I - dt eps D2) v = u with the boundary slope extrapolated from u."""
    n = u.size
    r = dt * eps / dx**2
    lower = np.full(n, -r)
    upper = np.full(n, -r)
    diag = np.full(n, 1.0 + 2.0 * r)
    rhs = u.copy()
    g0, gn = _boundary_slopes(u, dx)
    # ghost u_{-1} = u_1 - 2 dx g0, u_n = u_{n-2} + 2 dx gn
    upper[0] = -2.0 * r
    lower[-1] = -2.0 * r
    rhs[0] -= 2.0 * r * dx * g0
    rhs[-1] += 2.0 * r * dx * gn
    return kernels.thomas(lower, diag, upper, rhs)


def _godunov_interval(u, p_start, p_end, spec, V, dx, dt, cfg, k):
    # march backward over one coarse interval [t_k, t_{k+1}]
    remaining = dt
    tau = 0.0
    steps = 0
    eps = spec.epsilon
    while remaining > 1e-14 * dt:
        price = p_end + (p_start - p_end) * (tau / dt)
        pmax = np.max(np.abs(kernels.upwind_momentum(u, price, dx)))
        limit = cfg.cfl_safety * dx * spec.c / pmax if pmax > 0 else remaining
        h = min(remaining, limit)
        if remaining / h > cfg.max_substeps - steps:
            raise ConfigError(
                f"CFL needs more than {cfg.max_substeps} sub-steps on interval {k}"
                f" (max |p| = {pmax:.3g})")
        u, _ = kernels.hjb_step(u, price, spec.c, V, dx, h)
        if eps > 0:
            u = implicit_diffusion_hjb(u, eps, dx, h)
        remaining -= h
        tau += h
        steps += 1
    return u


def _semi_lagrangian_interval(u, price, spec, V, x, dx, dt, cfg):
    # u(x, t) = min_a [(c/2 a^2 + price a) dt + V(x) dt + u(x + a dt, t + dt)]
    ux = np.gradient(u, dx, edge_order=2)
    a_star = -(price + ux) / spec.c
    spread = 2.0 * dx / dt + np.abs(a_star).max() * 0.25
    offsets = np.linspace(-spread, spread, cfg.sl_controls)
    interp = interp1d(x, u, kind="linear", fill_value="extrapolate", assume_sorted=True)
    best = np.full(u.shape, np.inf)
    for off in np.concatenate(([0.0], offsets)):
        a = a_star + off
        cand = (0.5 * spec.c * a * a + price * a) * dt + interp(x + a * dt)
        np.minimum(best, cand, out=best)
    best += V * dt
    if spec.epsilon > 0:
        best = implicit_diffusion_hjb(best, spec.epsilon, dx, dt)
    return best


def solve_hjb(spec: HamiltonianSpec, terminal: TerminalCost, price: PricePath,
              space: SpaceGrid, time: TimeGrid, config: HJBConfig | None = None) -> ValueField:
    """Value function on ``space`` x ``time`` for a given price path."""
    cfg = config or HJBConfig()
    if price.grid != time:
        raise ConfigError("price path and time grid differ")
    x, dx, dt = space.nodes, space.dx, time.dt
    V = spec.potential.value(x)
    out = np.empty((time.n_t + 1, space.n_x))
    u = terminal.value(x).astype(float)
    out[-1] = u
    w = price.values
    for k in range(time.n_t - 1, -1, -1):
        if cfg.scheme == "upwind_godunov":
            u = _godunov_interval(u, w[k], w[k + 1], spec, V, dx, dt, cfg, k)
        else:
            u = _semi_lagrangian_interval(u, w[k + 1], spec, V, x, dx, dt, cfg)
        if not np.all(np.isfinite(u)):
            raise NumericalBlowUp(f"HJB solution became non-finite at time index {k}", k)
        out[k] = u
    return ValueField(space, time, out)


def upwind_momentum_field(u: ValueField, price: PricePath):
    """Godunov-selected ``price + u_x`` on every slice (the HJB's own upwinding)."""
    dx = u.space.dx
    return np.stack([kernels.upwind_momentum(u.values[k], price.values[k], dx)
                     for k in range(u.time.n_t + 1)])


def semiconcavity_report(u: ValueField):
    """Max second difference of u(., t_k) for each k."""
    return np.max(second_difference(u.values, u.space.dx, axis=1), axis=1)


def lipschitz_bound(spec: HamiltonianSpec, terminal: TerminalCost, space: SpaceGrid,
                    horizon: float):
    """Lip(ū) + T Lip(V) measured on the grid."""
    x = space.nodes
    lip_u = np.max(np.abs(np.diff(terminal.value(x)))) / space.dx
    lip_V = np.max(np.abs(np.diff(spec.potential.value(x)))) / space.dx
    return float(lip_u + horizon * lip_V)


def dump_csv(u: ValueField, path):
    """Write (t, x, u, u_x) rows."""
    t = u.time.nodes
    x = u.space.nodes
    ux = u.gradient()
    T, X = np.meshgrid(t, x, indexing="ij")
    data = np.column_stack([T.ravel(), X.ravel(), u.values.ravel(), ux.ravel()])
    np.savetxt(path, data, delimiter=",", header="t,x,u,u_x", comments="", fmt="%.12g")
