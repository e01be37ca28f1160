"""JSON model configuration: loading, validation and construction of model objects.

Required keys: horizon, n_t, x_min, x_max, n_x, c, epsilon, potential,
terminal, initial, supply. There are no defaults for physical constants.

Example::

    {"horizon": 24, "n_t": 480, "x_min": -2, "x_max": 10, "n_x": 201,
     "c": 2.0, "epsilon": 0.0,
     "potential": {"kind": "zero"},
     "terminal": {"kind": "quadratic", "gamma": 1.0, "zeta": 0.0},
     "initial": {"kind": "gaussian", "mean": 0.0, "std": 0.5},
     "supply": {"inline": {"sinusoid": {"amplitude": 1.0, "period": 24}}}}

``supply`` is either ``{"path": "file.csv"}`` (columns ``time_hours,value``;
relative paths resolve against the config file) or ``{"inline": ...}`` with
``{"time_hours": [...], "value": [...]}`` or ``{"sinusoid": {...}}``.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Any

import numpy as np

from .calibration import read_series_csv
from .errors import ConfigError, DomainError
from .model import (AnalyticSupply, HamiltonianSpec, InitialDensity, PotentialSpec,
                    SpaceGrid, SupplySchedule, TerminalCost, TimeGrid)

REQUIRED = ("horizon", "n_t", "x_min", "x_max", "n_x", "c", "epsilon",
            "potential", "terminal", "initial", "supply")


@dataclass
class Problem:
    spec: HamiltonianSpec
    terminal: TerminalCost
    initial: InitialDensity
    supply: Any
    space: SpaceGrid
    time: TimeGrid
    raw: dict


def parse_config_text(text: str, source: str = "<config>") -> dict:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    return cfg


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    cfg = parse_config_text(text, str(path))
    cfg.setdefault("_base_dir", os.path.dirname(os.path.abspath(path)))
    return cfg


def _num(d, key, where, integer=False):
    if key not in d:
        raise ConfigError(f"missing required key {where}{key!r}")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}{key!r} must be a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{where}{key!r} must be an integer, got {v!r}")
    return int(v) if integer else float(v)


def _section(cfg, key):
    sec = cfg[key]
    if not isinstance(sec, dict):
        raise ConfigError(f"{key!r} must be an object")
    return sec


def _array(sec, key, n, where):
    vals = sec.get(key)
    if not isinstance(vals, list) or len(vals) != n:
        raise ConfigError(f"{where}{key!r} must be a list of {n} numbers")
    return np.asarray(vals, dtype=float)


def build_potential(sec, space):
    kind = sec.get("kind")
    if kind == "zero":
        return PotentialSpec()
    if kind == "quadratic":
        return PotentialSpec.quadratic(_num(sec, "eta", "potential."), _num(sec, "kappa", "potential."))
    if kind == "tabulated":
        return PotentialSpec.tabulated(space, _array(sec, "values", space.n_x, "potential."))
    raise ConfigError(f"potential.kind must be zero|quadratic|tabulated, got {kind!r}")


def build_terminal(sec, space):
    kind = sec.get("kind")
    if kind == "quadratic":
        return TerminalCost.quadratic(_num(sec, "gamma", "terminal."), _num(sec, "zeta", "terminal."))
    if kind == "tabulated":
        return TerminalCost.tabulated(space, _array(sec, "values", space.n_x, "terminal."))
    raise ConfigError(f"terminal.kind must be quadratic|tabulated, got {kind!r}")


def build_initial(sec, space):
    kind = sec.get("kind")
    if kind == "gaussian":
        return InitialDensity.gaussian(space, _num(sec, "mean", "initial."), _num(sec, "std", "initial."))
    if kind == "values":
        return InitialDensity.from_values(space, _array(sec, "values", space.n_x, "initial."))
    raise ConfigError(f"initial.kind must be gaussian|values, got {kind!r}")


def build_supply(sec, horizon, base_dir="."):
    interp = sec.get("interpolation", "cubic")
    if "path" in sec:
        path = sec["path"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        if not os.path.exists(path):
            raise ConfigError(f"supply file not found: {path}")
        t, q = read_series_csv(path)
        sup = SupplySchedule(t, q, interp)
    elif "inline" in sec:
        inline = sec["inline"]
        if isinstance(inline, dict) and "sinusoid" in inline:
            s = inline["sinusoid"]
            period = _num(s, "period", "supply.inline.sinusoid.")
            if period <= 0:
                raise ConfigError("supply sinusoid period must be positive")
            sup = AnalyticSupply.sinusoid(_num(s, "amplitude", "supply.inline.sinusoid."),
                                          2.0 * np.pi / period, float(s.get("phase", 0.0)),
                                          float(s.get("offset", 0.0)), horizon)
        elif isinstance(inline, dict):
            try:
                sup = SupplySchedule(inline["time_hours"], inline["value"], interp)
            except KeyError as exc:
                raise ConfigError(f"supply.inline is missing {exc}") from None
        else:
            raise ConfigError("supply.inline must be an object")
    else:
        raise ConfigError("supply needs 'path' or 'inline'")
    if not sup.covers(horizon):
        raise ConfigError(f"supply does not cover [0, {horizon}]")
    return sup


def build_problem(cfg: dict) -> Problem:
    missing = [k for k in REQUIRED if k not in cfg]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    try:
        time = TimeGrid(_num(cfg, "horizon", ""), _num(cfg, "n_t", "", integer=True))
        space = SpaceGrid(_num(cfg, "x_min", ""), _num(cfg, "x_max", ""), _num(cfg, "n_x", "", integer=True))
        for key in ("potential", "terminal", "initial", "supply"):
            _section(cfg, key)
        potential = build_potential(cfg["potential"], space)
        spec = HamiltonianSpec(_num(cfg, "c", ""), potential, _num(cfg, "epsilon", ""))
        terminal = build_terminal(cfg["terminal"], space)
        initial = build_initial(cfg["initial"], space)
        supply = build_supply(cfg["supply"], time.horizon, cfg.get("_base_dir", "."))
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    return Problem(spec, terminal, initial, supply, space, time, cfg)


def trivial_config() -> dict:
    """Zero supply, zero terminal cost, static Gaussian population."""
    return {"horizon": 1.0, "n_t": 20, "x_min": -4.0, "x_max": 4.0, "n_x": 81, "c": 1.0,
            "epsilon": 0.0, "potential": {"kind": "zero"},
            "terminal": {"kind": "quadratic", "gamma": 0.0, "zeta": 0.0},
            "initial": {"kind": "gaussian", "mean": 0.0, "std": 0.7},
            "supply": {"inline": {"time_hours": [0.0, 1.0], "value": [0.0, 0.0]}}}


def reference_lq_config() -> dict:
    """One-day LQ problem with a unit-amplitude sinusoidal supply."""
    return {"horizon": 24.0, "n_t": 480, "x_min": -2.0, "x_max": 10.0, "n_x": 201, "c": 2.0,
            "epsilon": 0.0, "potential": {"kind": "zero"},
            "terminal": {"kind": "quadratic", "gamma": 1.0, "zeta": 0.0},
            "initial": {"kind": "gaussian", "mean": 0.0, "std": 0.5},
            "supply": {"inline": {"sinusoid": {"amplitude": 1.0, "period": 24.0}}}}
