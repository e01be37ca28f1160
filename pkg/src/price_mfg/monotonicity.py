"""Discrete version of the monotone operator behind uniqueness.

For w = (m, u, price),

    A[w] = ( u_t + eps u_xx - H(x, price + u_x),
             m_t - eps m_xx - (m D_pH(x, price + u_x))_x,
             int m D_pH(x, price + u_x) dx + Q(t) )

paired with  <w, w'> = int int (m m' + u u') + int price price'.

The stencils are chosen so the continuous integration-by-parts identities
hold exactly on the grid: the time derivative is the second-order
summation-by-parts operator for the trapezoid weights, the Laplacian is
self-adjoint for the node volumes, and the divergence is minus the adjoint of
the gradient. The gap therefore reduces to a pointwise Bregman sum and is
non-negative up to rounding for any convex H.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .model import HamiltonianSpec, SpaceGrid, TimeGrid

POSITIVITY_FLOOR = 1e-8


@dataclass(frozen=True)
class Triple:
    """Grid triple (m, u, price); arrays indexed ``[k, i]`` and ``[k]``."""

    space: SpaceGrid
    time: TimeGrid
    m: np.ndarray
    u: np.ndarray
    varpi: np.ndarray

    def __post_init__(self):
        shape = (self.time.n_t + 1, self.space.n_x)
        for name in ("m", "u"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ConfigError(f"{name} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, name, arr)
        vp = np.asarray(self.varpi, dtype=float)
        if vp.shape != (shape[0],):
            raise ConfigError("price path does not match the time grid")
        object.__setattr__(self, "varpi", vp)

    @classmethod
    def from_solution(cls, sol):
        return cls(sol.u.space, sol.u.time, sol.m.values, sol.u.values, sol.varpi.values)

    @property
    def is_positive(self) -> bool:
        return bool(np.min(self.m) >= POSITIVITY_FLOOR)

    def boundary_compatible(self, other: "Triple") -> bool:
        """Same initial density and same terminal value."""
        return (self.space == other.space and self.time == other.time
                and np.array_equal(self.m[0], other.m[0])
                and np.array_equal(self.u[-1], other.u[-1]))

    def __sub__(self, other):
        return Triple(self.space, self.time, self.m - other.m, self.u - other.u,
                      self.varpi - other.varpi)


def time_weights(time: TimeGrid):
    w = np.full(time.n_t + 1, time.dt)
    w[0] = w[-1] = 0.5 * time.dt
    return w


def time_derivative(a, dt):
    """SBP first derivative along axis 0: centered inside, one-sided at the ends."""
    d = np.empty_like(a)
    d[1:-1] = (a[2:] - a[:-2]) / (2.0 * dt)
    d[0] = (a[1] - a[0]) / dt
    d[-1] = (a[-1] - a[-2]) / dt
    return d


def space_gradient(a, dx):
    """Centered inside, one-sided first order at the ends (last axis)."""
    g = np.empty_like(a)
    g[..., 1:-1] = (a[..., 2:] - a[..., :-2]) / (2.0 * dx)
    g[..., 0] = (a[..., 1] - a[..., 0]) / dx
    g[..., -1] = (a[..., -1] - a[..., -2]) / dx
    return g


def space_divergence(F, space: SpaceGrid):
    """-W^{-1} G^T W F, the negative adjoint of ``space_gradient`` for volumes W."""
    dx, vol = space.dx, space.volumes
    WF = F * vol
    out = np.zeros_like(F)
    # G^T applied to WF: G[i, i+1] = 1/(2dx) and G[i, i-1] = -1/(2dx) inside
    out[..., 2:] += WF[..., 1:-1] / (2.0 * dx)
    out[..., :-2] -= WF[..., 1:-1] / (2.0 * dx)
    out[..., 1] += WF[..., 0] / dx
    out[..., 0] -= WF[..., 0] / dx
    out[..., -1] += WF[..., -1] / dx
    out[..., -2] -= WF[..., -1] / dx
    return -out / vol


def laplacian(a, space: SpaceGrid):
    """Zero-flux Laplacian, self-adjoint for the node volumes."""
    dx, vol = space.dx, space.volumes
    flux = np.diff(a, axis=-1) / dx
    out = np.zeros_like(a)
    out[..., :-1] += flux
    out[..., 1:] -= flux
    return out / vol


def apply_A(w: Triple, spec: HamiltonianSpec, Q) -> Triple:
    """Image of ``w``; returned as a Triple (HJB row, FP row, balance row)."""
    x, dt = w.space.nodes, w.time.dt
    eps = spec.epsilon
    p = w.varpi[:, None] + space_gradient(w.u, w.space.dx)
    flux = w.m * spec.Dp(x, p)
    row_hjb = time_derivative(w.u, dt) + eps * laplacian(w.u, w.space) - spec.H(x, p)
    row_fp = time_derivative(w.m, dt) - eps * laplacian(w.m, w.space) - space_divergence(flux, w.space)
    row_bal = flux @ w.space.volumes + Q(w.time.nodes)
    return Triple(w.space, w.time, row_hjb, row_fp, row_bal)


def pairing(a: Triple, b: Triple) -> float:
    wt = time_weights(a.time)
    vol = a.space.volumes
    field = (a.m * b.m + a.u * b.u) @ vol
    return float(wt @ field + wt @ (a.varpi * b.varpi))


def _check(w, wt):
    if w.space != wt.space or w.time != wt.time:
        raise ConfigError("triples live on different grids")
    if not w.boundary_compatible(wt):
        raise DomainError("precondition: triples must share m(., 0) and u(., T)")
    if not (w.is_positive and wt.is_positive):
        raise DomainError(f"precondition: densities must be >= {POSITIVITY_FLOOR:g}")


def monotonicity_gap(w: Triple, wt: Triple, spec: HamiltonianSpec, Q) -> float:
    """<A[w] - A[w~], w - w~>; non-negative for convex H."""
    _check(w, wt)
    return pairing(apply_A(w, spec, Q) - apply_A(wt, spec, Q), w - wt)


def gap_parts(w: Triple, wt: Triple, spec: HamiltonianSpec):
    """(A1 part, A2 part) of the gap; the A1 part cancels by summation by parts."""
    _check(w, wt)
    d = w - wt
    eps = spec.epsilon
    dt = w.time.dt
    a1 = Triple(w.space, w.time,
                time_derivative(d.u, dt) + eps * laplacian(d.u, w.space),
                time_derivative(d.m, dt) - eps * laplacian(d.m, w.space),
                np.zeros_like(d.varpi))
    zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))  # noqa: E731
    full = pairing(apply_A(w, spec, zero) - apply_A(wt, spec, zero), d)
    part1 = pairing(a1, d)
    return part1, full - part1


def bregman_integrand(w: Triple, wt: Triple, spec: HamiltonianSpec) -> float:
    """int int |p - p~|^2 (m + m~) with p = price + u_x."""
    g = lambda z: z.varpi[:, None] + space_gradient(z.u, z.space.dx)  # noqa: E731
    integrand = (g(w) - g(wt)) ** 2 * (w.m + wt.m)
    return float(time_weights(w.time) @ (integrand @ w.space.volumes))


def random_triple(space: SpaceGrid, time: TimeGrid, m0, uT, rng, scale=1.0):
    """Smooth random triple with m(., 0) = m0 and u(., T) = uT, m > 0 and unit mass."""
    x, t = space.nodes, time.nodes
    L, T = space.x_max - space.x_min, time.horizon
    X, Tt = np.meshgrid(x, t, indexing="ij")
    X, Tt = X.T, Tt.T

    def bumps(n):
        out = np.zeros_like(X)
        for _ in range(n):
            a = rng.normal(0.0, scale)
            cx = rng.uniform(space.x_min, space.x_max)
            sx = rng.uniform(0.1, 0.4) * L
            om = rng.uniform(0.0, 4.0 * np.pi / T)
            ph = rng.uniform(0.0, 2.0 * np.pi)
            out += a * np.exp(-0.5 * ((X - cx) / sx) ** 2) * np.cos(om * Tt + ph)
        return out

    m = m0[None, :] * np.exp((Tt / T) * bumps(3))
    m[1:] /= (m[1:] @ space.volumes)[:, None]
    m[0] = m0
    u = uT[None, :] + ((T - Tt) / T) * bumps(3)
    u[-1] = uT
    k = np.arange(1, 4)
    varpi = (rng.normal(0.0, scale, 3)[None, :]
             * np.cos(np.outer(t, k) * 2 * np.pi / T + rng.uniform(0, 2 * np.pi, 3))).sum(axis=1)
    return Triple(space, time, m, u, varpi)


def run_trials(spec: HamiltonianSpec, Q, space: SpaceGrid, time: TimeGrid, m0, uT,
               n_trials=1000, seed=0, tol=1e-8):
    """Seeded Monte Carlo over boundary-compatible positive pairs.

    Returns the report ``{"trials", "min_gap", "violations"}``.
    """
    rng = np.random.default_rng(seed)
    gaps = np.empty(n_trials)
    for j in range(n_trials):
        w = random_triple(space, time, m0, uT, rng)
        wt = random_triple(space, time, m0, uT, rng)
        gaps[j] = monotonicity_gap(w, wt, spec, Q)
    return {"trials": int(n_trials), "min_gap": float(gaps.min()),
            "violations": int(np.sum(gaps < -tol))}
