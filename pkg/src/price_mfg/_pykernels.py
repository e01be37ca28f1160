"""Pure numpy implementations of the inner-loop kernels.

These mirror ``_ckernels.pyx`` one for one and are used when the compiled
extension is unavailable (or ``PRICE_MFG_PURE=1``).
"""
import numpy as np


def _ghosts(u):
    # quadratic extrapolation: u_x extended linearly past the ends
    left = 3.0 * u[0] - 3.0 * u[1] + u[2]
    right = 3.0 * u[-1] - 3.0 * u[-2] + u[-3]
    return left, right


def upwind_momentum(u, price, dx):
    """Godunov-selected momentum ``price + u_x`` at every node.

    For the convex kinetic part p**2/(2c) (minimum at p = 0) the Godunov
    flux picks the backward difference when it is positive, the forward
    difference when it is negative, and 0 in the sonic region.
    """
    left, right = _ghosts(u)
    ext = np.empty(u.size + 2)
    ext[0] = left
    ext[1:-1] = u
    ext[-1] = right
    diff = np.diff(ext) / dx
    a = price + diff[:-1]
    b = price + diff[1:]
    ap = np.maximum(a, 0.0)
    bm = np.minimum(b, 0.0)
    return np.where(ap * ap >= bm * bm, ap, bm)


def hjb_step(u, price, c, potential, dx, dt):
    """One explicit backward step of u_tau + p**2/(2c) = V, returns (u_new, p)."""
    p = upwind_momentum(u, price, dx)
    return u - dt * (p * p / (2.0 * c) - potential), p


def fp_step(m, drift, vol, dt):
    """Conservative upwind transport step with zero-flux ends.

    Written as a positive combination (stay + inflow) so m >= 0 holds exactly
    under the CFL limit.
    """
    right = np.maximum(drift, 0.0)
    left = np.maximum(-drift, 0.0)
    right[-1] = 0.0
    left[0] = 0.0
    out = m * (1.0 - dt * (right + left) / vol)
    out[1:] += dt * right[:-1] * m[:-1] / vol[1:]
    out[:-1] += dt * left[1:] * m[1:] / vol[:-1]
    return out


def thomas(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``lower[0]`` and ``upper[-1]`` are ignored."""
    n = diag.size
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / denom if i < n - 1 else 0.0
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / denom
    out = np.empty(n)
    out[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        out[i] = dp[i] - cp[i] * out[i + 1]
    return out


def volterra_trapezoid(forcing, kernel, h):
    """Solve y(t) = f(t) - int_0^t k(t-s) y(s) ds on a uniform grid.

    ``kernel[j]`` is k(j*h). Trapezoidal product rule, O(h**2).
    """
    n = forcing.size
    y = np.empty(n)
    y[0] = forcing[0]
    scale = 1.0 + 0.5 * h * kernel[0]
    for i in range(1, n):
        acc = 0.5 * kernel[i] * y[0]
        if i > 1:
            acc += np.dot(kernel[i - 1:0:-1], y[1:i])
        y[i] = (forcing[i] - h * acc) / scale
    return y
