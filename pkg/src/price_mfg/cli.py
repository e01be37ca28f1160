"""Command-line interface: ``price-mfg {solve,lq,potential,calibrate,verify}``.

Exit codes: 0 success, 2 configuration error, 3 non-convergence,
4 numerical blow-up, 5 invariant violation.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .errors import (ConfigError, DomainError, InconsistencyError, NonConvergence,
                     NumericalBlowUp)
from .kernels import BACKEND

log = logging.getLogger("price_mfg")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONV, EXIT_BLOWUP, EXIT_INVARIANT = 0, 2, 3, 4, 5


class InvariantViolation(Exception):
    """Raised by ``verify`` when a checked property fails."""


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


class Run:
    """Output directory bookkeeping and the run manifest."""

    def __init__(self, args, command):
        self.args = args
        self.command = command
        self.out = args.out
        self.outputs = []
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        try:
            os.makedirs(self.out, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {self.out}: {exc.strerror}") from None
        if not os.access(self.out, os.W_OK):
            raise ConfigError(f"output directory {self.out} is not writable")

    def path(self, name):
        self.outputs.append(name)
        return os.path.join(self.out, name)

    def manifest(self, status, extra=None):
        man = {"command": self.command, "config": self.args.config, "output_dir": self.out,
               "seed": self.args.seed, "tol_price": self.args.tol_price,
               "tol_balance": self.args.tol_balance, "version": __version__,
               "backend": BACKEND, "threads": os.environ.get("PRICE_MFG_THREADS"),
               "started": self.started,
               "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
               "status": status, "outputs": sorted(self.outputs)}
        if extra:
            man.update(extra)
        _write_json(os.path.join(self.out, "manifest.json"), man)


def _problem(args, default=None):
    from .config import build_problem, load_config

    if args.config is None:
        if default is None:
            raise ConfigError("--config is required for this command")
        cfg = default()
    else:
        cfg = load_config(args.config)
    return build_problem(cfg)


def _fixed_point_config(args, raw):
    from .price import FixedPointConfig

    solver = raw.get("solver", {})
    if not isinstance(solver, dict):
        raise ConfigError("'solver' must be an object")
    known = {"damping", "max_iters", "anderson_depth", "price_map"}
    unknown = set(solver) - known - {"hjb_scheme", "cfl_safety"}
    if unknown:
        raise ConfigError(f"unknown solver keys: {', '.join(sorted(unknown))}")
    kw = {k: solver[k] for k in known if k in solver}
    return FixedPointConfig(tol_price=args.tol_price, tol_balance=args.tol_balance, **kw)


def _hjb_config(raw):
    from .hjb import HJBConfig

    solver = raw.get("solver", {})
    return HJBConfig(scheme=solver.get("hjb_scheme", "upwind_godunov"),
                     cfl_safety=solver.get("cfl_safety", 0.9))


def cmd_solve(args, run):
    from . import fp, hjb
    from .model import validate_assumptions
    from .price import (energy_estimate_diagnostic, solve_equilibrium, write_convergence_log,
                        write_price_csv)

    prob = _problem(args)
    report = validate_assumptions(prob.spec, prob.terminal, prob.initial)
    if not all(report.results[k] for k in ("A1", "A2", "A5")):
        raise ConfigError(f"model data violate assumptions: {', '.join(report.failures())}")
    cfg = _fixed_point_config(args, prob.raw)
    try:
        sol = solve_equilibrium(prob.spec, prob.terminal, prob.initial, prob.supply,
                                prob.space, prob.time, cfg, _hjb_config(prob.raw))
    except NonConvergence as exc:
        write_convergence_log(exc.history, run.path("convergence.csv"))
        raise
    write_price_csv(sol, run.path("price.csv"))
    write_convergence_log(sol.history, run.path("convergence.csv"))
    if not args.no_fields:
        hjb.dump_csv(sol.u, run.path("u.csv"))
        fp.dump_csv(sol.m, run.path("m.csv"))
    summary = {"iterations": sol.iterations, "balance_sup": sol.balance_sup,
               "price_change": sol.history[-1][1], "lipschitz_price": sol.varpi.lipschitz_estimate,
               "energy_estimate": energy_estimate_diagnostic(prob.spec, sol),
               "mass_error": float(np.max(np.abs(sol.m.mass() - 1.0))),
               "min_density": float(sol.m.values.min()),
               "assumptions": report.results}
    _write_json(run.path("summary.json"), summary)
    return summary


def _x0_list(raw, prob):
    x0 = raw.get("lq", {}).get("x0")
    if x0 is None:
        mu = prob.initial.mean
        return [mu - 1.0, mu, mu + 1.0]
    if not isinstance(x0, list) or not all(isinstance(v, (int, float)) for v in x0):
        raise ConfigError("lq.x0 must be a list of numbers")
    return [float(v) for v in x0]


def _quadratic_terminal(prob):
    if prob.terminal.kind != "quadratic":
        raise ConfigError("this command needs a quadratic terminal cost")
    return prob.terminal.gamma, prob.terminal.zeta


def cmd_lq(args, run):
    from .lq import agent_trajectory, lq_general_terminal, solve_lq_quadratic_terminal, write_lq_csv

    prob = _problem(args)
    if prob.spec.potential.kind != "zero":
        raise ConfigError("the lq command needs potential.kind = zero (use 'potential')")
    T, n_t = prob.time.horizon, prob.time.n_t
    xbar = prob.initial.mean
    if prob.terminal.kind == "quadratic":
        gamma, zeta = _quadratic_terminal(prob)
        sol = solve_lq_quadratic_terminal(prob.spec.c, gamma, zeta, xbar, prob.supply, T, n_t)
    else:
        sol = lq_general_terminal(prob.spec.c, prob.terminal, prob.initial, prob.supply, T, n_t)
        gamma = None
    write_lq_csv(sol, run.path("lq_price.csv"))
    x0 = _x0_list(prob.raw, prob)
    summary = {"Theta": sol.Theta, "xbar": xbar,
               "price_peak_to_peak": float(np.ptp(sol.price.values))}
    if gamma is not None:
        t, xs, mean = agent_trajectory(prob.spec.c, gamma, T, prob.supply, x0, xbar, n_t)
        data = np.column_stack([t, mean, xs])
        header = "t,xbar," + ",".join(f"x0={v:g}" for v in x0)
        np.savetxt(run.path("trajectories.csv"), data, delimiter=",", header=header,
                   comments="", fmt="%.12g")
    _write_json(run.path("lq_summary.json"), summary)
    return summary


def cmd_potential(args, run):
    from .lq import solve_potential_model, write_potential_csv, write_potential_json

    prob = _problem(args)
    pot = prob.spec.potential
    if pot.kind == "tabulated":
        raise ConfigError("the potential model needs potential.kind = quadratic or zero")
    gamma, zeta = _quadratic_terminal(prob)
    route = prob.raw.get("potential_model", {}).get("route", "volterra")
    state, price = solve_potential_model(prob.spec.c, pot.eta, pot.kappa, gamma, zeta,
                                         prob.initial.mean, prob.supply, prob.time.horizon,
                                         prob.time.n_t, route=route)
    write_potential_csv(state, run.path("potential.csv"))
    write_potential_json(state, run.path("potential.json"))
    return state.to_json()


SUBSTITUTION_NOTE = ("no reference price supplied: calibrated against a synthetic reference "
                     "Theta - c Q generated from the demand (property-based substitute for "
                     "the external reference series)")


def cmd_calibrate(args, run):
    from .calibration import (calibrate, ingest_demand, read_series_csv, synthetic_day_demand,
                              synthetic_reference, write_calibration_csv,
                              write_calibration_json)

    if args.demand:
        demand = ingest_demand(args.demand, args.agents)
    else:
        demand = synthetic_day_demand(agent_count=args.agents)
    note = None
    if args.reference:
        rt, rp = read_series_csv(args.reference)
    else:
        note = SUBSTITUTION_NOTE
        rng = np.random.default_rng(args.seed)
        amp = 0.5 * np.ptp(args.synthetic_c * demand.supply)
        rt, rp = synthetic_reference(demand, args.synthetic_c, args.synthetic_theta,
                                     args.noise * amp, rng)
    res = calibrate(demand, rt, rp)
    write_calibration_csv(res, run.path("calibration.csv"))
    write_calibration_json(res, run.path("calibration.json"))
    summary = res.to_json()
    if note:
        summary["note"] = note
        log.warning(note)
    return summary


def _check(results, name, ok, **detail):
    results[name] = {"pass": bool(ok), **detail}


def cmd_verify(args, run):
    from .config import trivial_config
    from .lq import agent_trajectory, solve_lq_quadratic_terminal
    from .monotonicity import run_trials
    from .price import solve_equilibrium

    prob = _problem(args, default=trivial_config)
    results = {}
    cfg = _fixed_point_config(args, prob.raw)
    sol = solve_equilibrium(prob.spec, prob.terminal, prob.initial, prob.supply,
                            prob.space, prob.time, cfg, _hjb_config(prob.raw))
    _check(results, "balance", sol.balance_sup <= args.tol_balance, value=sol.balance_sup)
    mass_err = float(np.max(np.abs(sol.m.mass() - 1.0)))
    _check(results, "mass", mass_err <= 1e-10, value=mass_err)
    min_m = float(sol.m.values.min())
    _check(results, "positivity", min_m >= (0.0 if prob.spec.epsilon == 0 else -1e-14), value=min_m)

    lq_applicable = (prob.spec.potential.kind == "zero" and prob.terminal.kind == "quadratic"
                     and prob.spec.epsilon == 0)
    if lq_applicable:
        T = prob.time.horizon
        g, z = prob.terminal.gamma, prob.terminal.zeta
        lq = solve_lq_quadratic_terminal(prob.spec.c, g, z, prob.initial.mean, prob.supply, T,
                                         prob.time.n_t)
        err = float(np.max(np.abs(sol.varpi.values - lq.price.values)))
        amp = max(0.5 * float(np.ptp(lq.price.values)), 1.0)
        _check(results, "lq_cross_check", err <= 1e-2 * amp, value=err, tolerance=1e-2 * amp)
        x0 = prob.initial.grid.nodes[:: max(1, prob.space.n_x // 20)]
        # the agent ODE gets its own step (<= 0.01 h), independent of the PDE grid
        n_ode = max(prob.time.n_t, int(np.ceil(T / 0.01)))
        t, xs, mean = agent_trajectory(prob.spec.c, g, T, prob.supply, x0, prob.initial.mean,
                                       n_ode)
        energy = float(np.max(np.abs(mean - prob.initial.mean - prob.supply.integral(t))))
        _check(results, "energy_identity", energy <= 1e-8, value=energy)

    x = prob.space.nodes
    m0 = prob.initial.values + 1e-3 * np.exp(-0.5 * ((x - x.mean()) / (0.25 * np.ptp(x))) ** 2)
    m0 = m0 / prob.space.integrate(m0)
    mono = run_trials(prob.spec, prob.supply, prob.space, prob.time, m0,
                      prob.terminal.value(x), n_trials=args.trials, seed=args.seed)
    _check(results, "monotonicity", mono["violations"] == 0 and mono["min_gap"] >= -1e-8, **mono)

    _write_json(run.path("verify.json"), results)
    failed = [k for k, v in results.items() if not v["pass"]]
    for k, v in results.items():
        print(f"{'PASS' if v['pass'] else 'FAIL'} {k}")
    if failed:
        raise InvariantViolation(f"invariants violated: {', '.join(failed)}")
    return results


COMMANDS = {"solve": cmd_solve, "lq": cmd_lq, "potential": cmd_potential,
            "calibrate": cmd_calibrate, "verify": cmd_verify}


def _global_flags(parser, suppress):
    # the same flags are accepted before and after the subcommand; the
    # subcommand copies default to SUPPRESS so they never clobber the others
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="JSON model configuration")
    parser.add_argument("--out", default=d("price_mfg_out"), help="output directory")
    parser.add_argument("--seed", type=int, default=d(0), help="random seed")
    parser.add_argument("--tol-price", type=float, default=d(1e-8),
                        help="sup-norm price change that stops the fixed point")
    parser.add_argument("--tol-balance", type=float, default=d(1e-3),
                        help="allowed sup-norm balance residual")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    p = argparse.ArgumentParser(prog="price-mfg", description=__doc__.splitlines()[0])
    _global_flags(p, suppress=False)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="solve the equilibrium price problem")
    s.add_argument("--no-fields", action="store_true", help="skip the u/m field dumps")
    sub.add_parser("lq", parents=[common], help="closed-form model without potential")
    sub.add_parser("potential", parents=[common], help="quadratic-potential model")
    c = sub.add_parser("calibrate", parents=[common], help="fit (c, Theta) to a reference price",
                       description=SUBSTITUTION_NOTE.capitalize() + " when --reference is omitted.")
    c.add_argument("--demand", help="demand CSV (time_hours,value); synthetic day if omitted")
    c.add_argument("--reference", help="reference price CSV (time_hours,value)")
    c.add_argument("--agents", type=float, default=1e6, help="agent count N")
    c.add_argument("--synthetic-c", type=float, default=0.00172)
    c.add_argument("--synthetic-theta", type=float, default=50.0)
    c.add_argument("--noise", type=float, default=0.0,
                   help="synthetic noise std as a fraction of the price amplitude")
    v = sub.add_parser("verify", parents=[common], help="run the property suite")
    v.add_argument("--trials", type=int, default=1000, help="monotonicity trials")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = None
    try:
        run = Run(args, args.command)
        summary = COMMANDS[args.command](args, run)
        run.manifest("ok")
        if args.command != "verify":
            print(json.dumps(summary, sort_keys=True, default=float))
        return EXIT_OK
    except (ConfigError, DomainError) as exc:
        code, status, err = EXIT_CONFIG, "config-error", exc
    except NonConvergence as exc:
        code, status, err = EXIT_NONCONV, "non-convergence", exc
    except NumericalBlowUp as exc:
        code, status, err = EXIT_BLOWUP, "blow-up", exc
    except (InconsistencyError, InvariantViolation) as exc:
        code, status, err = EXIT_INVARIANT, "invariant-violation", exc
    print(f"price-mfg: error: {err}", file=sys.stderr)
    if run is not None:
        run.manifest(status, {"error": str(err)})
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
