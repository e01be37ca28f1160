"""Time the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--n-x 401] [--repeat 5]

Also times one full equilibrium solve with each backend (in a subprocess, since
the backend is fixed at import).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from price_mfg import _pykernels

try:
    from price_mfg import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None

SOLVE = r"""
import time, numpy as np
from price_mfg import BACKEND
from price_mfg.config import build_problem, reference_lq_config
from price_mfg.price import solve_equilibrium
p = build_problem(reference_lq_config())
t0 = time.perf_counter()
solve_equilibrium(p.spec, p.terminal, p.initial, p.supply, p.space, p.time)
print(BACKEND, time.perf_counter() - t0)
"""


def cases(n):
    rng = np.random.default_rng(0)
    u = rng.normal(size=n).cumsum() * 0.01
    m = rng.uniform(size=n)
    b = rng.normal(size=n)
    vol = np.full(n, 0.05)
    V = np.zeros(n)
    lower, upper = -rng.uniform(size=n), -rng.uniform(size=n)
    diag = 3.0 + rng.uniform(size=n)
    f, k = rng.normal(size=n), rng.normal(size=n)
    return {
        "upwind_momentum": lambda K: K.upwind_momentum(u, 0.3, 0.05),
        "hjb_step": lambda K: K.hjb_step(u, 0.3, 1.0, V, 0.05, 1e-3),
        "fp_step": lambda K: K.fp_step(m, b, vol, 1e-3),
        "thomas": lambda K: K.thomas(lower, diag, upper, f),
        "volterra_trapezoid": lambda K: K.volterra_trapezoid(f, k, 0.01),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-x", type=int, default=401)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--no-solve", action="store_true", help="skip the end-to-end solve timing")
    args = ap.parse_args(argv)

    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"{'kernel':<20}" + "".join(f"{name:>14}" for name, _ in backends) + f"{'speedup':>10}")
    for name, fn in cases(args.n_x).items():
        times = []
        for _, K in backends:
            number = 200
            times.append(min(timeit.repeat(lambda: fn(K), number=number, repeat=args.repeat)) / number)
        speed = f"{times[0] / times[1]:9.1f}x" if len(times) > 1 else ""
        print(f"{name:<20}" + "".join(f"{1e6 * t:12.1f}us" for t in times) + speed)

    if not args.no_solve:
        print("\nreference equilibrium (201 x 480):")
        for pure in (False, True):
            env = dict(os.environ, PRICE_MFG_THREADS="1")
            env.pop("PRICE_MFG_PURE", None)
            if pure:
                env["PRICE_MFG_PURE"] = "1"
            out = subprocess.run([sys.executable, "-c", SOLVE], env=env, capture_output=True,
                                 text=True, check=True).stdout.split()
            print(f"  {out[0]:<8} {float(out[1]):.2f} s")


if __name__ == "__main__":
    main()
