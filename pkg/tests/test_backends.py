"""The numpy fallback must reproduce the compiled backend end to end."""
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from price_mfg import kernels

SCRIPT = r"""
import json, numpy as np
from price_mfg import BACKEND
from price_mfg.model import *
from price_mfg.price import solve_equilibrium
Q = AnalyticSupply.sinusoid(1.0, 2 * np.pi / 4.0, horizon=4.0)
sp, ti = SpaceGrid(-3.0, 5.0, 61), TimeGrid(4.0, 40)
sol = solve_equilibrium(HamiltonianSpec(2.0, epsilon=0.01), TerminalCost.quadratic(1.0, 0.0),
                        InitialDensity.gaussian(sp, 0.0, 0.5), Q, sp, ti)
print(json.dumps({"backend": BACKEND, "price": sol.varpi.values.tolist(),
                  "m_last": sol.m.values[-1].tolist()}))
"""


def _run(pure):
    env = dict(os.environ)
    env.pop("PRICE_MFG_PURE", None)
    if pure:
        env["PRICE_MFG_PURE"] = "1"
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True,
                         check=True)
    return json.loads(out.stdout)


def test_pure_flag_selects_numpy_backend():
    assert _run(True)["backend"] == "python"


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
def test_backends_give_same_equilibrium():
    a, b = _run(False), _run(True)
    assert a["backend"] == "cython"
    np.testing.assert_allclose(a["price"], b["price"], atol=1e-10)
    np.testing.assert_allclose(a["m_last"], b["m_last"], atol=1e-10)
