# cython: language_level=3
"""Compiled inner loops; see _pykernels for the reference semantics."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline void _momentum(const double[::1] u, double price, double dx,
                           double[::1] p) noexcept nogil:
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i
    cdef double left = 3.0 * u[0] - 3.0 * u[1] + u[2]
    cdef double right = 3.0 * u[n - 1] - 3.0 * u[n - 2] + u[n - 3]
    cdef double prev, nxt, a, b
    for i in range(n):
        prev = u[i - 1] if i > 0 else left
        nxt = u[i + 1] if i < n - 1 else right
        a = price + (u[i] - prev) / dx
        b = price + (nxt - u[i]) / dx
        if a < 0.0:
            a = 0.0
        if b > 0.0:
            b = 0.0
        p[i] = a if a * a >= b * b else b


def upwind_momentum(const double[::1] u, double price, double dx):
    out = np.empty(u.shape[0])
    cdef double[::1] p = out
    _momentum(u, price, dx, p)
    return out


def hjb_step(const double[::1] u, double price, double c,
             const double[::1] potential, double dx, double dt):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i
    p_arr = np.empty(n)
    new_arr = np.empty(n)
    cdef double[::1] p = p_arr
    cdef double[::1] new = new_arr
    with nogil:
        _momentum(u, price, dx, p)
        for i in range(n):
            new[i] = u[i] - dt * (p[i] * p[i] / (2.0 * c) - potential[i])
    return new_arr, p_arr


def fp_step(const double[::1] m, const double[::1] drift,
            const double[::1] vol, double dt):
    cdef Py_ssize_t n = m.shape[0]
    cdef Py_ssize_t i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double r, l
    with nogil:
        for i in range(n):
            r = drift[i] if (drift[i] > 0.0 and i < n - 1) else 0.0
            l = -drift[i] if (drift[i] < 0.0 and i > 0) else 0.0
            out[i] = m[i] * (1.0 - dt * (r + l) / vol[i])
        for i in range(n - 1):
            if drift[i] > 0.0:
                out[i + 1] += dt * drift[i] * m[i] / vol[i + 1]
            if drift[i + 1] < 0.0:
                out[i] -= dt * drift[i + 1] * m[i + 1] / vol[i]
    return out_arr


def thomas(const double[::1] lower, const double[::1] diag,
           const double[::1] upper, const double[::1] rhs):
    cdef Py_ssize_t n = diag.shape[0]
    cdef Py_ssize_t i
    cp_arr = np.empty(n)
    dp_arr = np.empty(n)
    out_arr = np.empty(n)
    cdef double[::1] cp = cp_arr
    cdef double[::1] dp = dp_arr
    cdef double[::1] out = out_arr
    cdef double denom
    with nogil:
        cp[0] = upper[0] / diag[0]
        dp[0] = rhs[0] / diag[0]
        for i in range(1, n):
            denom = diag[i] - lower[i] * cp[i - 1]
            cp[i] = upper[i] / denom if i < n - 1 else 0.0
            dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / denom
        out[n - 1] = dp[n - 1]
        for i in range(n - 2, -1, -1):
            out[i] = dp[i] - cp[i] * out[i + 1]
    return out_arr


def volterra_trapezoid(const double[::1] forcing, const double[::1] kernel,
                       double h):
    cdef Py_ssize_t n = forcing.shape[0]
    cdef Py_ssize_t i, j
    y_arr = np.empty(n)
    cdef double[::1] y = y_arr
    cdef double acc
    cdef double scale = 1.0 + 0.5 * h * kernel[0]
    with nogil:
        y[0] = forcing[0]
        for i in range(1, n):
            acc = 0.5 * kernel[i] * y[0]
            for j in range(1, i):
                acc += kernel[i - j] * y[j]
            y[i] = (forcing[i] - h * acc) / scale
    return y_arr
