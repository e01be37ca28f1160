"""Demand ingestion and least-squares calibration of the affine price model.

The supply seen by the storage agents is the negative of the demand, per agent,
with its time average removed. Given a reference price series, the wear
constant c and the level Theta of ``price = Theta - c Q`` follow from ordinary
least squares.
"""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import DomainError
from .model import PricePath, SupplySchedule, TimeGrid

HEADER = ("time_hours", "value")


def _as_series(times, values, what):
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.shape != v.shape:
        raise DomainError(f"{what}: times and values must be 1-D and of equal length")
    if t.size < 2:
        raise DomainError(f"{what}: need at least 2 samples, got {t.size}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
        raise DomainError(f"{what}: NaN or infinite entries")
    if np.any(np.diff(t) <= 0):
        raise DomainError(f"{what}: timestamps must be strictly increasing")
    return t, v


def _time_mean(t, v):
    return trapezoid(v, t) / (t[-1] - t[0])


@dataclass(frozen=True)
class DemandSeries:
    """Demand samples over a day and the agent count used for scaling.

    ``supply`` is the per-agent supply ``-demand / N`` minus its time average,
    so that ``int Q dt = 0`` over the sampled window.
    """

    times: np.ndarray
    demand: np.ndarray
    agent_count: float = 1.0

    def __post_init__(self):
        t, v = _as_series(self.times, self.demand, "demand series")
        if not (np.isfinite(self.agent_count) and self.agent_count >= 1):
            raise DomainError("agent count must be >= 1")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "demand", v)

    @property
    def supply(self) -> np.ndarray:
        q = -self.demand / self.agent_count
        return q - _time_mean(self.times, q)

    def normalized(self) -> "DemandSeries":
        """Series whose demand already is the normalized per-agent supply's negative."""
        return DemandSeries(self.times, -self.supply, 1.0)

    def to_schedule(self, interpolation="linear") -> SupplySchedule:
        return SupplySchedule(self.times, self.supply, interpolation)


def read_series_csv(path_or_text):
    """Read a two-column "time_hours,value" CSV (comma or semicolon separated)."""
    if isinstance(path_or_text, (str, os.PathLike)) and os.path.exists(path_or_text):
        with open(path_or_text, newline="") as fh:
            text = fh.read()
    else:
        text = str(path_or_text)
    if not text.strip():
        raise DomainError("empty CSV input")
    first = text.lstrip().splitlines()[0]
    delim = ";" if first.count(";") > first.count(",") else ","
    rows = [r for r in csv.reader(io.StringIO(text), delimiter=delim) if r and any(c.strip() for c in r)]
    header = tuple(c.strip().lower() for c in rows[0])
    if header != HEADER:
        raise DomainError(f"expected header {','.join(HEADER)!r}, got {delim.join(rows[0])!r}")
    data = rows[1:]
    if not data:
        raise DomainError("CSV has a header but no data")
    try:
        arr = np.array([[float(c) for c in r] for r in data])
    except ValueError as exc:
        raise DomainError(f"non-numeric CSV entry: {exc}") from None
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("CSV rows must have exactly two columns")
    return _as_series(arr[:, 0], arr[:, 1], "CSV series")


def ingest_demand(source, agent_count=1.0) -> DemandSeries:
    """Build a :class:`DemandSeries` from a CSV path, CSV text, or inline data.

    Inline data may be a mapping ``{"time_hours": [...], "value": [...]}`` or
    a sequence of ``(time, value)`` pairs.
    """
    if isinstance(source, dict):
        try:
            t, v = source["time_hours"], source["value"]
        except KeyError as exc:
            raise DomainError(f"inline demand is missing {exc}") from None
    elif isinstance(source, (str, os.PathLike)):
        t, v = read_series_csv(source)
    else:
        arr = np.asarray(source, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise DomainError("inline demand must be (time, value) pairs")
        t, v = arr[:, 0], arr[:, 1]
    return DemandSeries(t, v, float(agent_count))


@dataclass(frozen=True)
class CalibrationResult:
    c_hat: float
    Theta_hat: float
    rms_error: float
    residuals: np.ndarray
    times: np.ndarray
    supply: np.ndarray
    fit: np.ndarray
    se_c: float
    se_Theta: float
    projected: bool = False

    def to_json(self):
        return {"c": self.c_hat, "Theta": self.Theta_hat, "rms": self.rms_error,
                "se_c": self.se_c, "se_Theta": self.se_Theta, "n": int(self.times.size),
                "projected": self.projected}


def align(t1, v1, t2, v2):
    """Linearly interpolate the shorter series onto the longer one's nodes (on the overlap)."""
    if t1.size == t2.size and np.allclose(t1, t2, rtol=0, atol=1e-12):
        return t1, v1, v2
    swap = t1.size < t2.size
    (ta, va), (tb, vb) = ((t2, v2), (t1, v1)) if swap else ((t1, v1), (t2, v2))
    keep = (ta >= tb[0] - 1e-12) & (ta <= tb[-1] + 1e-12)
    if keep.sum() < 3:
        raise DomainError("series overlap in fewer than 3 nodes")
    ta, va = ta[keep], va[keep]
    vb = np.interp(ta, tb, vb)
    return (ta, vb, va) if swap else (ta, va, vb)


def calibrate(demand: DemandSeries, ref_times, ref_price) -> CalibrationResult:
    """Unweighted OLS fit of  ref = Theta - c Q  with c projected onto c >= 0."""
    rt, rp = _as_series(ref_times, ref_price, "reference price")
    t, q, p = align(demand.times, demand.supply, rt, rp)
    n = t.size
    qm, pm = q.mean(), p.mean()
    dq = q - qm
    sxx = float(dq @ dq)
    if sxx <= (1e-14 * max(1.0, np.max(np.abs(q)))) ** 2 * n:
        raise DomainError("supply has zero variance: c is not identifiable")
    c = -float(dq @ (p - pm)) / sxx
    projected = c < 0
    if projected:
        c = 0.0
    Theta = pm + c * qm
    fit = Theta - c * q
    res = p - fit
    rss = float(res @ res)
    sigma2 = rss / (n - 2) if n > 2 else np.nan
    se_c = float(np.sqrt(sigma2 / sxx))
    se_T = float(np.sqrt(sigma2 * (1.0 / n + qm**2 / sxx)))
    return CalibrationResult(c, float(Theta), float(np.sqrt(rss / n)), res, t, q, fit,
                             se_c, se_T, projected)


def price_forecast(result: CalibrationResult, Q, grid: TimeGrid):
    """``Theta_hat - c_hat Q(t)`` on ``grid`` and its peak-to-peak amplitude."""
    path = PricePath(grid, result.Theta_hat - result.c_hat * np.asarray(Q(grid.nodes), dtype=float))
    return path, float(np.ptp(path.values))


def synthetic_day_demand(n=48, agent_count=1e6, base=30000.0, swing=8000.0):
    """A two-peak daily demand profile in MW-like units on ``n`` half-hour-ish nodes."""
    t = np.linspace(0.0, 24.0, n + 1)
    shape = (0.6 * np.exp(-0.5 * ((t - 8.5) / 1.8) ** 2)
             + 1.0 * np.exp(-0.5 * ((t - 18.0) / 2.2) ** 2)
             - 0.7 * np.exp(-0.5 * ((t - 3.5) / 2.5) ** 2))
    return DemandSeries(t, base + swing * shape, agent_count)


def synthetic_reference(demand: DemandSeries, c, Theta, noise=0.0, rng=None):
    """Reference price ``Theta - c Q`` with optional Gaussian noise of std ``noise``."""
    p = Theta - c * demand.supply
    if noise > 0:
        rng = np.random.default_rng(rng)
        p = p + rng.normal(0.0, noise, p.shape)
    return demand.times.copy(), p


def write_calibration_csv(result: CalibrationResult, path):
    data = np.column_stack([result.times, result.supply, result.fit, result.residuals])
    np.savetxt(path, data, delimiter=",", header="t,Q,price_fit,residual", comments="",
               fmt="%.12g")


def write_calibration_json(result: CalibrationResult, path):
    with open(path, "w") as fh:
        json.dump(result.to_json(), fh, indent=2, sort_keys=True)
