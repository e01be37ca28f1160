"""Kernel backend selection.

The compiled extension is used when it imports; setting ``PRICE_MFG_PURE=1``
forces the numpy fallback.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("PRICE_MFG_PURE"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _pykernels


def _c(a):
    return np.ascontiguousarray(a, dtype=float)


def upwind_momentum(u, price, dx):
    return _impl.upwind_momentum(_c(u), float(price), float(dx))


def hjb_step(u, price, c, potential, dx, dt):
    return _impl.hjb_step(_c(u), float(price), float(c), _c(potential), float(dx), float(dt))


def fp_step(m, drift, vol, dt):
    return _impl.fp_step(_c(m), _c(drift), _c(vol), float(dt))


def thomas(lower, diag, upper, rhs):
    return _impl.thomas(_c(lower), _c(diag), _c(upper), _c(rhs))


def volterra_trapezoid(forcing, kernel, h):
    return _impl.volterra_trapezoid(_c(forcing), _c(kernel), float(h))
