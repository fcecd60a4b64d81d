"""Whenever a builtin scenario satisfies (IC1) and (AC), invariance and first integrals follow.

The averaged forms are quadrature approximations, so invariance is asserted
to a tolerance tied to the measured (IC1) residual.
"""

import pytest

from gaugepoisson.scenario import Runner, build_scenario, builtin_names, load_config

WITH_ACTION = [n for n in builtin_names() if "symmetry" in load_config(n)]


@pytest.mark.slow
@pytest.mark.parametrize("name", WITH_ACTION)
def test_premises_imply_conclusions(name):
    scn = build_scenario(load_config(name))
    runner = Runner(scn)
    ic1, ac = runner.run_check("ic1"), runner.run_check("ac")
    if not (ic1.passed and ac.passed):
        pytest.skip(f"{name}: premises do not hold")
    inv = runner.run_check("invariance")
    assert inv.residual <= max(1e-8, 100 * ic1.residual), inv
    fi = runner.run_check("first-integrals")
    assert fi.passed, fi
