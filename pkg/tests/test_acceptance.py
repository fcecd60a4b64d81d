"""Acceptance criteria 1-11, each at its stated tolerance.

Every test records one PASS/FAIL line, repeated in the pytest terminal summary.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import fiber_points, phase_points
from gaugepoisson.bundle import (
    ConnectionPair,
    SectionFamily,
    ae_residual,
    averaged_connection,
    check_ico,
    check_lpvh1,
    check_lpvh2,
    check_lpvh3,
    generalized_wong_rhs,
    solve_ae_so3,
)
from gaugepoisson.cli import main
from gaugepoisson.dynamics import Metric, hamiltonian_rhs, integrate, kinetic_hamiltonian, monitor, wong_rhs
from gaugepoisson.exprlang import EvalContext, evaluate, parse
from gaugepoisson.gauge import GaugePoissonStructure, PhaseFunction, check_jacobi, join_state, rank_at
from gaugepoisson.lie import PoissonFiber, coordinate_field, quadratic_casimir, so3
from gaugepoisson.models import generic_so3_potential, radial_section, wu_yang_gauge_form, wu_yang_momentum, wu_yang_potential
from gaugepoisson.scenario import load_config
from gaugepoisson.symmetry import (
    SectionField,
    check_ac,
    check_invariance,
    coadjoint_so3_action,
    group_average,
    random_group_element,
    s1_average,
    section_circle_action,
    torus_action,
    torus_average,
)

L = so3()
SO3 = PoissonFiber.lie_poisson(L)
G = Metric.identity(3)


def wu_yang_structure():
    return GaugePoissonStructure(SO3, wu_yang_gauge_form())


def test_01_wu_yang_reconstruction(rng, acceptance):
    t0 = time.perf_counter()
    A = s1_average(section_circle_action(radial_section(), SO3), nodes=256)
    closed = wu_yang_gauge_form()
    err = max(float(np.max(np.abs(A(q, y) - closed.value(q, y)))) for q, y in fiber_points(rng, 100))
    dt = time.perf_counter() - t0
    acceptance(1, "Wu-Yang reconstruction", err <= 1e-10 and dt < 5.0, f"max error {err:.2e}, {dt:.2f} s")


def test_02_jacobi(rng, acceptance):
    t0 = time.perf_counter()
    details, ok = [], True
    for name, S in [("wu-yang", wu_yang_structure()),
                    ("generic", GaugePoissonStructure(SO3, generic_so3_potential().gauge_form()))]:
        tol = 1e-10 if S.analytic else 1e-6
        rep = check_jacobi(S, phase_points(rng, 10), tol)
        ok &= rep.passed
        details.append(f"{name} {rep.residual:.2e} (tol {tol:.0e})")
    dt = time.perf_counter() - t0
    acceptance(2, "Jacobi identity", ok and dt < 30.0, ", ".join(details) + f", {dt:.1f} s")


def test_03_rank(rng, acceptance):
    S = wu_yang_structure()
    pts = phase_points(rng, 20)
    ranks = [rank_at(S, x) for x in pts]
    zero = [rank_at(S, np.concatenate([x[:6], np.zeros(3)])) for x in pts]
    ok = set(ranks) == {8} and set(zero) == {6}
    acceptance(3, "Rank formula", ok, f"ranks y!=0 {sorted(set(ranks))}, y=0 {sorted(set(zero))}")


def test_04_invariance(rng, acceptance):
    S = wu_yang_structure()
    act = section_circle_action(radial_section(), SO3)
    rep = check_invariance(S, act, [random_group_element(act, rng) for _ in range(20)], phase_points(rng, 20),
                           tol=1e-8)
    fixed = section_circle_action(SectionField.constant([0.0, 0.0, 1.0], 3), SO3)
    ctrl = check_invariance(S, fixed, [random_group_element(fixed, rng) for _ in range(20)], phase_points(rng, 20),
                            tol=1e-8)
    acceptance(4, "Invariance", rep.passed and not ctrl.passed,
               f"residual {rep.residual:.2e}, fixed-axis control {ctrl.residual:.2e}")


def test_05_first_integrals(acceptance):
    init = load_config("wu-yang")["simulation"]["initial"]
    x0 = join_state(init["p"], init["q"], init["y"])
    traj = integrate(wong_rhs(wu_yang_potential(), L, G), x0, 10.0, 1e-3)
    rep = monitor(traj, {
        "H": kinetic_hamiltonian(G, 3),
        "|y|^2": PhaseFunction.from_fiber_field(quadratic_casimir(), 3, 3),
        "J": PhaseFunction.from_fiber_field(wu_yang_momentum(), 3, 3),
        "y1": PhaseFunction.from_fiber_field(coordinate_field(0), 3, 3),
    })
    drift = {k: e.max_rel_drift for k, e in rep.entries.items()}
    ok = all(drift[k] <= 1e-8 for k in ("H", "|y|^2", "J")) and drift["y1"] > 1e-3
    acceptance(5, "First integrals", ok, ", ".join(f"{k} {v:.2e}" for k, v in drift.items()))


def test_06_ac(rng, acceptance):
    act = section_circle_action(radial_section(), SO3)
    rep = check_ac(act.momentum, act, fiber_points(rng, 50), tol=1e-8)
    acceptance(6, "Condition (AC)", rep.passed, f"max average {rep.residual:.2e}")


def test_07_specialization(rng, acceptance):
    f_wong = wong_rhs(wu_yang_potential(), L, G)
    f_ham = hamiltonian_rhs(wu_yang_structure(), kinetic_hamiltonian(G, 3))
    f_gen = generalized_wong_rhs(ConnectionPair.from_potential(wu_yang_potential(), L), G)
    pts = phase_points(rng, 100)
    e1 = max(float(np.max(np.abs(f_wong(x) - f_ham(x)))) for x in pts)
    e2 = max(float(np.max(np.abs(f_wong(x) - f_gen(x)))) for x in pts)
    acceptance(7, "Specialization", e1 <= 1e-8 and e2 <= 1e-12, f"wong/hamiltonian {e1:.2e}, generalized {e2:.2e}")


def test_08_connection_chain(rng, acceptance):
    s = radial_section()
    C = averaged_connection(ConnectionPair.flat(3, L), SectionFamily([s]), "circle", 64)
    qs = [q for q, _ in fiber_points(rng, 10)]
    reps = [check(C, qs) for check in (check_lpvh1, check_lpvh2, check_lpvh3)]
    reps.append(check_ico(C, SectionFamily([s]), qs))
    closed = wu_yang_gauge_form()
    contraction = max(float(np.max(np.abs(y @ C.A(q) - closed.value(q, y)))) for q, y in fiber_points(rng, 20))
    ae = ae_residual(solve_ae_so3(s), s, qs)
    ok = all(r.passed and r.residual <= 1e-6 for r in reps) and contraction <= 1e-8 and ae <= 1e-10
    worst = max(r.residual for r in reps)
    acceptance(8, "Connection chain", ok, f"LPVH/ICO {worst:.2e}, contraction {contraction:.2e}, AE {ae:.2e}")


def test_09_haar_normalization(rng, acceptance):
    act = coadjoint_so3_action(3)
    one = float(group_average(lambda z: 1.0, act, np.ones(3), np.ones(3)))
    s = radial_section()
    circle = s1_average(section_circle_action(s, SO3), nodes=16)
    torus = torus_average(torus_action([s], SO3), nodes=16)
    err = max(float(np.max(np.abs(circle(q, y) - torus(q, y)))) for q, y in fiber_points(rng, 20))
    ok = abs(one - 1.0) <= 1e-6 and err <= 1e-12
    acceptance(9, "Haar normalization", ok, f"SO(3) mass {one:.12f}, torus vs circle {err:.2e}")


def _exit_code(tmp_path, name, mutate, argv):
    cfg = load_config(name)
    mutate(cfg)
    path = tmp_path / f"case{len(list(tmp_path.iterdir()))}.json"
    path.write_text(json.dumps(cfg))
    return main([a.replace("{cfg}", str(path)) for a in argv] + ["--out", str(tmp_path / "out.txt")])


def test_10_parser(rng, tmp_path, acceptance, capsys):
    goldens = {"2+3*4^2": 50.0, "-2^2": -4.0}
    got = {src: evaluate(parse(src, (3, 3)), EvalContext(3, 3)) for src in goldens}
    trig = parse("sin(q1)^2 + cos(q1)^2", (1, 0))
    trig_err = max(abs(evaluate(trig, EvalContext(1, 0, q=[x])) - 1.0) for x in rng.uniform(-10, 10, 10))

    def ham(expr):
        return lambda c: c["hamiltonian"].update(expr=expr)

    sim = ["simulate", "--config", "{cfg}"]
    cases = {
        "syntax": (ham("q1 +"), 2),
        "unknown identifier": (ham("z1"), 2),
        "arity": (ham("atan2(q1)"), 2),
        "index range": (ham("q4"), 2),
        "division by zero": (ham("1/(q1 - q1)"), 3),
    }
    codes = {k: _exit_code(tmp_path, "constant-section", mut, sim) for k, (mut, _) in cases.items()}
    capsys.readouterr()
    ok = got == goldens and trig_err <= 1e-15 and all(codes[k] == cases[k][1] for k in cases)
    acceptance(10, "Parser goldens", ok, f"goldens {got}, trig {trig_err:.1e}, exit codes {codes}")


def test_11_determinism(tmp_path, acceptance):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        subprocess.run([sys.executable, "-m", "gaugepoisson", "verify", "--config", "wu-yang.json", "--seed", "42",
                        "--out", str(out)], check=False, capture_output=True)
        outs.append(out.read_bytes() if out.exists() else None)
    ok = outs[0] is not None and outs[0] == outs[1]
    acceptance(11, "Determinism", ok, f"{len(outs[0] or b'')} bytes, identical {ok}")
