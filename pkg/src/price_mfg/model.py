"""Domain types: grids, the separable Hamiltonian, data fields, supply curve.

Units are fixed throughout: charge in kWh, power in kW (per agent), time in
hours and prices in $/(kW h). The wear constant ``c`` is in $/(kW^2 h).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator, make_interp_spline

from .errors import DomainError

# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n_t: int

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        if int(self.n_t) != self.n_t or self.n_t < 2:
            raise DomainError(f"n_t must be an integer >= 2, got {self.n_t}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_t

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_t + 1)

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.horizon, self.n_t * factor)


@dataclass(frozen=True)
class SpaceGrid:
    x_min: float
    x_max: float
    n_x: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)) or self.x_min >= self.x_max:
            raise DomainError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if int(self.n_x) != self.n_x or self.n_x < 3:
            raise DomainError(f"n_x must be an integer >= 3, got {self.n_x}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_x)

    @property
    def volumes(self) -> np.ndarray:
        """Trapezoid weights; the finite-volume schemes conserve ``volumes @ m``."""
        w = np.full(self.n_x, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w

    def integrate(self, values, axis=-1):
        return np.tensordot(np.asarray(values, dtype=float), self.volumes, axes=([axis], [0]))

    def refine(self) -> "SpaceGrid":
        return SpaceGrid(self.x_min, self.x_max, 2 * self.n_x - 1)


def gradient(values, dx, axis=-1):
    """Centered differences inside, second-order one-sided at the ends."""
    return np.gradient(np.asarray(values, dtype=float), dx, axis=axis, edge_order=2)


def second_difference(values, dx, axis=-1):
    """(f(x+h) - 2f(x) + f(x-h)) / h**2 on interior nodes."""
    v = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    out = (v[..., 2:] - 2.0 * v[..., 1:-1] + v[..., :-2]) / dx**2
    return np.moveaxis(out, -1, axis)


# ---------------------------------------------------------------------------
# potential, terminal cost and the Hamiltonian


def _tabulated_eval(grid, values, x, order):
    xs = grid.nodes
    if order == 0:
        table = values
    elif order == 1:
        table = gradient(values, grid.dx)
    else:
        table = gradient(gradient(values, grid.dx), grid.dx)
    return np.interp(x, xs, table)


@dataclass(frozen=True)
class PotentialSpec:
    """Charge-preference potential V(x): ``zero``, ``quadratic`` or ``tabulated``."""

    kind: str = "zero"
    eta: float = 0.0
    kappa: float = 0.0
    values: Optional[np.ndarray] = field(default=None, compare=False)
    grid: Optional[SpaceGrid] = None

    def __post_init__(self):
        if self.kind not in ("zero", "quadratic", "tabulated"):
            raise DomainError(f"unknown potential kind {self.kind!r}")
        if self.kind == "quadratic" and not (np.isfinite(self.eta) and self.eta >= 0):
            raise DomainError("quadratic potential needs eta >= 0")
        if self.kind == "tabulated":
            if self.values is None or self.grid is None:
                raise DomainError("tabulated potential needs values and a grid")
            vals = np.asarray(self.values, dtype=float)
            if vals.shape != (self.grid.n_x,) or not np.all(np.isfinite(vals)):
                raise DomainError("tabulated potential must be finite and match the grid")
            object.__setattr__(self, "values", vals)

    @classmethod
    def quadratic(cls, eta, kappa):
        return cls("quadratic", eta=float(eta), kappa=float(kappa))

    @classmethod
    def tabulated(cls, grid, values):
        return cls("tabulated", values=np.asarray(values, dtype=float), grid=grid)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "quadratic":
            return 0.5 * self.eta * (x - self.kappa) ** 2
        return _tabulated_eval(self.grid, self.values, x, 0)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "quadratic":
            return self.eta * (x - self.kappa)
        return _tabulated_eval(self.grid, self.values, x, 1)

    def second_derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "quadratic":
            return np.full_like(x, self.eta)
        return _tabulated_eval(self.grid, self.values, x, 2)


@dataclass(frozen=True)
class TerminalCost:
    """Terminal cost ū(x): ``quadratic`` (gamma/2 (x - zeta)^2) or ``tabulated``."""

    kind: str = "quadratic"
    gamma: float = 0.0
    zeta: float = 0.0
    values: Optional[np.ndarray] = field(default=None, compare=False)
    grid: Optional[SpaceGrid] = None

    def __post_init__(self):
        if self.kind not in ("quadratic", "tabulated"):
            raise DomainError(f"unknown terminal cost kind {self.kind!r}")
        if self.kind == "quadratic" and not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise DomainError("quadratic terminal cost needs gamma >= 0")
        if self.kind == "tabulated":
            if self.values is None or self.grid is None:
                raise DomainError("tabulated terminal cost needs values and a grid")
            vals = np.asarray(self.values, dtype=float)
            if vals.shape != (self.grid.n_x,) or not np.all(np.isfinite(vals)):
                raise DomainError("tabulated terminal cost must be finite and match the grid")
            object.__setattr__(self, "values", vals)

    @classmethod
    def quadratic(cls, gamma, zeta):
        return cls("quadratic", gamma=float(gamma), zeta=float(zeta))

    @classmethod
    def tabulated(cls, grid, values):
        return cls("tabulated", values=np.asarray(values, dtype=float), grid=grid)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "quadratic":
            return 0.5 * self.gamma * (x - self.zeta) ** 2
        return _tabulated_eval(self.grid, self.values, x, 0)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "quadratic":
            return self.gamma * (x - self.zeta)
        return _tabulated_eval(self.grid, self.values, x, 1)

    def is_convex(self, tol=1e-10):
        if self.kind == "quadratic":
            return self.gamma >= 0
        return bool(np.all(second_difference(self.values, self.grid.dx) >= -tol))


@dataclass(frozen=True)
class HamiltonianSpec:
    """H(x, p) = p**2 / (2c) - V(x) with diffusion ``epsilon``."""

    c: float
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    epsilon: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise DomainError(f"wear constant c must be positive, got {self.c}")
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise DomainError(f"epsilon must be >= 0, got {self.epsilon}")

    @property
    def theta(self) -> float:
        """Uniform lower bound on D_pp H."""
        return 1.0 / self.c

    def H(self, x, p):
        p = np.asarray(p, dtype=float)
        return p * p / (2.0 * self.c) - self.potential.value(x)

    def Dp(self, x, p):
        return np.asarray(p, dtype=float) / self.c + 0.0 * np.asarray(x, dtype=float)

    def Dpp(self, x, p):
        return np.full(np.broadcast(np.asarray(x), np.asarray(p)).shape, 1.0 / self.c)

    def Dppp(self, x, p):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(p)).shape)

    def Dx(self, x, p):
        return -self.potential.derivative(x) + 0.0 * np.asarray(p, dtype=float)


def hamiltonian_eval(spec: HamiltonianSpec, x, p):
    """Return ``(H, D_pH, D_ppH, D_xH)`` at (x, p)."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
        raise DomainError("hamiltonian_eval received non-finite input")
    return spec.H(x, p), spec.Dp(x, p), spec.Dpp(x, p), spec.Dx(x, p)


# ---------------------------------------------------------------------------
# initial density


@dataclass(frozen=True)
class InitialDensity:
    grid: SpaceGrid
    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_x,) or not np.all(np.isfinite(vals)):
            raise DomainError("initial density must be finite and match the grid")
        if np.any(vals < 0):
            raise DomainError("initial density must be nonnegative")
        mass = self.grid.integrate(vals)
        if abs(mass - 1.0) > 1e-12:
            raise DomainError(f"initial density integrates to {mass!r}, expected 1")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_values(cls, grid, values):
        vals = np.clip(np.asarray(values, dtype=float), 0.0, None)
        mass = grid.integrate(vals)
        if not mass > 0:
            raise DomainError("initial density has zero mass")
        return cls(grid, vals / mass)

    @classmethod
    def gaussian(cls, grid, mean, std):
        x = grid.nodes
        return cls.from_values(grid, np.exp(-0.5 * ((x - mean) / std) ** 2))

    @property
    def mean(self) -> float:
        return float(self.grid.integrate(self.grid.nodes * self.values))

    def boundary_mass(self, cells: int = 2) -> float:
        w = self.grid.volumes * self.values
        return float(w[:cells].sum() + w[-cells:].sum())


# ---------------------------------------------------------------------------
# supply


class SupplySchedule:
    """Production rate Q(t) from samples, with Q' and K(t) = int_t^T Q.

    ``interpolation="cubic"`` uses a monotone (PCHIP) cubic so Q' exists;
    ``"linear"`` is piecewise linear and its derivative is the one-sided slope.
    """

    def __init__(self, times, values, interpolation="cubic"):
        t = np.asarray(times, dtype=float)
        q = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != q.shape or t.size < 2:
            raise DomainError("supply needs matching 1-D time/value arrays with >= 2 samples")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(q))):
            raise DomainError("supply samples must be finite")
        if np.any(np.diff(t) <= 0):
            raise DomainError("supply times must be strictly increasing")
        if interpolation not in ("cubic", "linear"):
            raise DomainError(f"unknown interpolation {interpolation!r}")
        if interpolation == "cubic" and t.size < 3:
            interpolation = "linear"
        self.times, self.samples, self.interpolation = t, q, interpolation
        if interpolation == "cubic":
            self._spline = PchipInterpolator(t, q, extrapolate=True)
        else:
            self._spline = make_interp_spline(t, q, k=1)
        self._deriv = self._spline.derivative()
        self._anti = self._spline.antiderivative()
        self.t0, self.horizon = float(t[0]), float(t[-1])

    @classmethod
    def from_function(cls, func, horizon, n_samples=97, interpolation="cubic"):
        t = np.linspace(0.0, horizon, n_samples)
        return cls(t, func(t), interpolation)

    def covers(self, horizon) -> bool:
        return self.t0 <= 1e-12 and self.horizon >= horizon - 1e-12

    def __call__(self, t):
        return self._spline(np.asarray(t, dtype=float))

    def derivative(self, t):
        return self._deriv(np.asarray(t, dtype=float))

    def integral(self, t):
        """int_0^t Q(s) ds."""
        return self._anti(np.asarray(t, dtype=float)) - self._anti(0.0)

    def tail(self, t, horizon=None):
        """K(t) = int_t^T Q(s) ds."""
        horizon = self.horizon if horizon is None else horizon
        return self._anti(horizon) - self._anti(np.asarray(t, dtype=float))


class AnalyticSupply:
    """Q(t) = polynomial + sum of complex exponentials (real part taken).

    Sinusoids ``a sin(w t + phi)`` are stored as exponential pairs. Closed
    forms for Q', K and the double integral feed the Laplace-route solver.
    """

    interpolation = "analytic"

    def __init__(self, poly=(), exponentials=(), horizon=np.inf):
        self.poly = tuple(float(a) for a in poly)
        self.exponentials = tuple((complex(a), complex(b)) for a, b in exponentials)
        self.t0, self.horizon = 0.0, float(horizon)

    @classmethod
    def sinusoid(cls, amplitude, omega, phase=0.0, offset=0.0, horizon=np.inf):
        # a sin(wt+phi) = Re(-i a e^{i phi} e^{i w t})
        coef = -1j * amplitude * np.exp(1j * phase)
        return cls(poly=(offset,), exponentials=((coef, 1j * omega),), horizon=horizon)

    def covers(self, horizon) -> bool:
        return True

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.polynomial.polynomial.polyval(t, self.poly) if self.poly else np.zeros_like(t)
        for a, b in self.exponentials:
            out = out + (a * np.exp(b * t)).real
        return out

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        d = np.polynomial.polynomial.polyder(self.poly) if len(self.poly) > 1 else ()
        out = np.polynomial.polynomial.polyval(t, d) if len(d) else np.zeros_like(t)
        for a, b in self.exponentials:
            out = out + (a * b * np.exp(b * t)).real
        return out

    def integral(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        if self.poly:
            out = out + np.polynomial.polynomial.polyval(t, np.polynomial.polynomial.polyint(self.poly))
        for a, b in self.exponentials:
            if b == 0:
                out = out + (a * t).real
            else:
                out = out + (a / b * (np.exp(b * t) - 1.0)).real
        return out

    def tail(self, t, horizon=None):
        horizon = self.horizon if horizon is None else horizon
        return self.integral(horizon) - self.integral(t)

    def double_integral(self, t):
        """int_0^t (t - s) Q(s) ds."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        if self.poly:
            P = np.polynomial.polynomial
            out = out + P.polyval(t, P.polyint(self.poly, 2))
        for a, b in self.exponentials:
            if b == 0:
                out = out + (a * t * t / 2.0).real
            else:
                out = out + (a * (np.exp(b * t) - 1.0 - b * t) / (b * b)).real
        return out


# ---------------------------------------------------------------------------
# fields on the grids


@dataclass(frozen=True)
class PricePath:
    grid: TimeGrid
    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_t + 1,) or not np.all(np.isfinite(vals)):
            raise DomainError("price path must be finite and match the time grid")
        object.__setattr__(self, "values", vals)

    @property
    def lipschitz_estimate(self) -> float:
        return float(np.max(np.abs(np.diff(self.values))) / self.grid.dt)

    def at(self, t):
        return np.interp(t, self.grid.nodes, self.values)

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, np.full(grid.n_t + 1, float(value)))


@dataclass(frozen=True)
class ValueField:
    """u(x_i, t_k) stored as ``values[k, i]``."""

    space: SpaceGrid
    time: TimeGrid
    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.time.n_t + 1, self.space.n_x):
            raise DomainError("value field shape does not match the grids")
        object.__setattr__(self, "values", vals)

    def gradient(self):
        return gradient(self.values, self.space.dx, axis=1)

    def second_difference(self):
        return second_difference(self.values, self.space.dx, axis=1)

    def lipschitz_per_slice(self):
        return np.max(np.abs(np.diff(self.values, axis=1)), axis=1) / self.space.dx


@dataclass(frozen=True)
class DensityField:
    """m(x_i, t_k) stored as ``values[k, i]``."""

    space: SpaceGrid
    time: TimeGrid
    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.time.n_t + 1, self.space.n_x):
            raise DomainError("density field shape does not match the grids")
        object.__setattr__(self, "values", vals)

    def mass(self):
        return self.space.integrate(self.values, axis=1)

    def mean(self):
        return self.space.integrate(self.values * self.space.nodes, axis=1)


# ---------------------------------------------------------------------------
# assumption checks


@dataclass
class AssumptionReport:
    results: dict
    details: dict

    @property
    def all_pass(self) -> bool:
        return all(self.results.values())

    def failures(self):
        return [k for k, ok in self.results.items() if not ok]


def _kink_ratio(values, dx):
    # slope jump concentrated in one cell relative to the total slope range:
    # O(dx) for smooth data, O(1) at a kink
    d1 = np.diff(values) / dx
    spread = np.ptp(d1)
    if spread == 0:
        return 0.0
    return float(np.max(np.abs(np.diff(d1))) / spread)


def _unbounded_below(values, dx):
    # minimum sitting on the truncation edge while still descending outward
    i = int(np.argmin(values))
    n = values.size
    if i == 0 and values[1] - values[0] > 1e-12 * max(1.0, abs(values[0])):
        return True
    if i == n - 1 and values[-2] - values[-1] > 1e-12 * max(1.0, abs(values[-1])):
        return True
    return False


def validate_assumptions(spec: HamiltonianSpec, terminal: TerminalCost,
                         initial: InitialDensity, kink_tol=0.2, convex_tol=1e-10):
    """Check A1-A6 on the grid of ``initial``; failures are reported, not raised."""
    grid = initial.grid
    x, dx = grid.nodes, grid.dx
    V = spec.potential.value(x)
    u_bar = terminal.value(x)
    res, det = {}, {}

    smooth_V = spec.potential.kind != "tabulated"
    smooth_u = terminal.kind != "tabulated"

    below = _unbounded_below(V, dx) if not smooth_V else False
    res["A1"] = spec.c > 0 and bool(np.all(np.isfinite(V))) and not below
    det["A1"] = {"uniform_convexity": 1.0 / spec.c, "V_min": float(V.min()),
                 "V_bounded_below_on_grid": not below}

    lip_V = float(np.max(np.abs(np.diff(V))) / dx)
    lip_u = float(np.max(np.abs(np.diff(u_bar))) / dx)
    res["A2"] = bool(np.isfinite(lip_V) and np.isfinite(lip_u))
    det["A2"] = {"lip_V": lip_V, "lip_u_bar": lip_u}

    kV = 0.0 if smooth_V else _kink_ratio(V, dx)
    ku = 0.0 if smooth_u else _kink_ratio(u_bar, dx)
    d2V = second_difference(V, dx)
    d2u = second_difference(u_bar, dx)
    res["A3"] = kV <= kink_tol and ku <= kink_tol
    det["A3"] = {"max_abs_d2V": float(np.max(np.abs(d2V))), "max_abs_d2u_bar": float(np.max(np.abs(d2u))),
                 "kink_ratio_V": kV, "kink_ratio_u_bar": ku}

    km = _kink_ratio(initial.values, dx)
    d2m = second_difference(initial.values, dx)
    res["A4"] = km <= kink_tol and ku <= kink_tol
    det["A4"] = {"max_abs_d2m_bar": float(np.max(np.abs(d2m))), "kink_ratio_m_bar": km}

    res["A5"] = spec.theta > 0
    det["A5"] = {"theta": spec.theta, "max_abs_Dppp": 0.0}

    conv_V = bool(np.all(d2V >= -convex_tol))
    conv_u = bool(np.all(d2u >= -convex_tol))
    res["A6"] = conv_V and conv_u
    det["A6"] = {"V_convex": conv_V, "u_bar_convex": conv_u}
    return AssumptionReport(res, det)
