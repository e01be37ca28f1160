"""Forward Fokker-Planck / transport solver for the agent density.

m_t + (b m)_x = eps m_xx with b = -D_pH(x, price + u_x). The transport part
is a conservative node-based upwind finite-volume update whose generator is
the negative transpose of the Godunov HJB linearisation; diffusion is
implicit. Both parts conserve ``SpaceGrid.volumes @ m`` exactly and keep
m >= 0 under the CFL limit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from . import kernels
from .errors import ConfigError, InconsistencyError, NumericalBlowUp
from .hjb import upwind_momentum_field
from .model import (DensityField, HamiltonianSpec, InitialDensity, PricePath,
                    SpaceGrid, TimeGrid, ValueField)


@dataclass(frozen=True)
class DriftField:
    """Agent velocity b(x_i, t_k) = -D_pH(x_i, price + u_x), stored ``[k, i]``."""

    space: SpaceGrid
    time: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.time.n_t + 1, self.space.n_x):
            raise ConfigError("drift field shape does not match the grids")
        if not np.all(np.isfinite(vals)):
            raise ConfigError("drift field contains non-finite values")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, space, time, v):
        return cls(space, time, np.full((time.n_t + 1, space.n_x), float(v)))


def momentum_field(u: ValueField, price: PricePath, momentum="upwind"):
    """price + u_x on every slice, with centered or Godunov-selected u_x."""
    if momentum == "centered":
        return price.values[:, None] + u.gradient()
    if momentum == "upwind":
        return upwind_momentum_field(u, price)
    raise ConfigError(f"unknown momentum {momentum!r}")


def drift_from_value(u: ValueField, price: PricePath, spec: HamiltonianSpec,
                     momentum="upwind") -> DriftField:
    """b = -D_pH(x, price + u_x) with the chosen u_x stencil."""
    p = momentum_field(u, price, momentum)
    return DriftField(u.space, u.time, -spec.Dp(u.space.nodes, p))


def implicit_diffusion_fp(m, eps, vol, dx, dt):
    """Solve the zero-flux backward-Euler diffusion step (mass-conservative)."""
    n = m.size
    r = dt * eps / dx
    lower = np.full(n, -r) / vol
    upper = np.full(n, -r) / vol
    nb = np.full(n, 2.0)
    nb[0] = nb[-1] = 1.0
    diag = 1.0 + r * nb / vol
    return kernels.thomas(lower, diag, upper, m)


def solve_fp(drift: DriftField, initial: InitialDensity, epsilon: float,
             space: SpaceGrid, time: TimeGrid, cfl_safety=0.9, max_substeps=20000,
             mass_tol=1e-10, drift_time="left") -> DensityField:
    """Density path from ``initial`` under ``drift``.

    Step k -> k+1 is driven by the slice-k drift (``drift_time="left"``) or by
    the mean of slices k and k+1 (``"average"``, second order in time).
    """
    if drift_time not in ("left", "average"):
        raise ConfigError(f"unknown drift_time {drift_time!r}")
    if drift.space != space or drift.time != time or initial.grid != space:
        raise ConfigError("drift, initial density and grids must share the same grids")
    vol = space.volumes
    dx, dt = space.dx, time.dt
    out = np.empty((time.n_t + 1, space.n_x))
    m = initial.values.copy()
    out[0] = m
    for k in range(time.n_t):
        b = drift.values[k]
        if drift_time == "average":
            b = 0.5 * (b + drift.values[k + 1])
        bmax = np.max(np.abs(b))
        limit = cfl_safety * vol.min() / bmax if bmax > 0 else dt
        n_sub = int(np.ceil(dt / limit - 1e-12))
        if n_sub > max_substeps:
            raise ConfigError(f"FP CFL needs {n_sub} sub-steps on interval {k}")
        h = dt / n_sub
        for _ in range(n_sub):
            m = kernels.fp_step(m, b, vol, h)
            if epsilon > 0:
                m = implicit_diffusion_fp(m, epsilon, vol, dx, h)
        if not np.all(np.isfinite(m)):
            raise NumericalBlowUp(f"FP solution became non-finite at time index {k + 1}", k + 1)
        out[k + 1] = m
    dens = DensityField(space, time, out)
    leak = np.max(np.abs(dens.mass() - 1.0))
    if leak > mass_tol:
        raise InconsistencyError(f"mass drifted by {leak:.3g}; widen the spatial domain")
    return dens


def transport_generator(b, dx):
    """Matrix A with the uniform-volume transport step m -> m + dt A m."""
    n = b.size
    right = np.maximum(b, 0.0) / dx
    left = np.maximum(-b, 0.0) / dx
    right[-1] = left[0] = 0.0
    A = np.zeros((n, n))
    idx = np.arange(n)
    A[idx, idx] = -(right + left)
    A[idx[1:], idx[:-1]] = right[:-1]
    A[idx[:-1], idx[1:]] = left[1:]
    return A


def wasserstein1(m1, m2, space: SpaceGrid):
    """1-Wasserstein distance of two grid densities via the L1 norm of CDFs."""
    w = space.volumes
    # cumulative trapezoid, consistent with the node volumes
    f = np.asarray(m1, dtype=float) - np.asarray(m2, dtype=float)
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * space.dx)))
    return float(np.sum(np.abs(cdf) * w))


def wasserstein1_continuity(m: DensityField):
    """max_k d1(m(t_k), m(t_{k+1})) / sqrt(dt)."""
    d = [wasserstein1(m.values[k], m.values[k + 1], m.space) for k in range(m.time.n_t)]
    return float(max(d) / np.sqrt(m.time.dt))


def weak_form_residual(m: DensityField, drift: DriftField, epsilon, psi, psi_t, psi_x, psi_xx):
    """Residual of the weak transport identity for a smooth test function.

    Returns  int psi m |_0^T - int int (psi_t + psi_x b + eps psi_xx) m  with
    b the drift; it vanishes for exact solutions.
    """
    x = m.space.nodes
    t = m.time.nodes
    T, X = np.meshgrid(t, x, indexing="ij")
    integrand = (psi_t(X, T) + psi_x(X, T) * drift.values + epsilon * psi_xx(X, T)) * m.values
    inner = m.space.integrate(integrand, axis=1)
    bulk = trapezoid(inner, t)
    ends = (m.space.integrate(psi(x, t[-1]) * m.values[-1])
            - m.space.integrate(psi(x, t[0]) * m.values[0]))
    return float(ends - bulk)


def second_order_diagnostic(spec: HamiltonianSpec, u: ValueField, m: DensityField):
    """int int D_pp H u_xx^2 m dx dt, monitored for boundedness only."""
    uxx = np.gradient(u.gradient(), u.space.dx, axis=1, edge_order=2)
    integrand = spec.Dpp(u.space.nodes, 0.0) * uxx**2 * m.values
    inner = m.space.integrate(integrand, axis=1)
    return float(np.sum(0.5 * (inner[1:] + inner[:-1])) * m.time.dt)


def dump_csv(m: DensityField, path):
    T, X = np.meshgrid(m.time.nodes, m.space.nodes, indexing="ij")
    data = np.column_stack([T.ravel(), X.ravel(), m.values.ravel()])
    np.savetxt(path, data, delimiter=",", header="t,x,m", comments="", fmt="%.12g")
