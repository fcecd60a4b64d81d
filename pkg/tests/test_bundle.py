import numpy as np
import pytest

from conftest import phase_points
from gaugepoisson.bundle import (
    ConnectionPair,
    SectionFamily,
    ae_residual,
    averaged_connection,
    averaging_correction,
    check_ico,
    check_lpvh1,
    check_lpvh2,
    check_lpvh3,
    check_structure_field,
    generalized_wong_rhs,
    induced_poisson_structure,
    solve_ae_so3,
)
from gaugepoisson.dynamics import Metric, integrate, kinetic_hamiltonian, monitor, wong_rhs
from gaugepoisson.errors import InvalidActionError
from gaugepoisson.gauge import PhaseFunction, join_state
from gaugepoisson.lie import PoissonFiber, so3
from gaugepoisson.models import generic_so3_potential, radial_section, wu_yang_gauge_form, wu_yang_momentum, wu_yang_potential
from gaugepoisson.symmetry import (
    SectionField,
    check_invariance,
    random_base_points,
    random_group_element,
    section_circle_action,
)

L = so3()
E3 = np.array([0.0, 0.0, 1.0])
RADIAL = SectionFamily([radial_section()])


@pytest.fixture
def base(rng):
    return random_base_points(3, 8, rng)


def wu_yang_pair():
    return ConnectionPair.from_potential(wu_yang_potential(), L)


def ae_pair():
    return ConnectionPair.from_potential(solve_ae_so3(radial_section()), L)


# --- LPVH conditions


@pytest.mark.parametrize("make", [lambda: ConnectionPair.flat(3, L), wu_yang_pair,
                                  lambda: ConnectionPair.from_potential(generic_so3_potential(), L)],
                         ids=["flat", "wu-yang", "generic"])
def test_coadjoint_pairs_satisfy_lpvh(make, base):
    C = make()
    for check in (check_lpvh1, check_lpvh2, check_lpvh3):
        rep = check(C, base)
        assert rep.passed, rep


def test_structure_field_of_so3(base):
    assert check_structure_field(wu_yang_pair(), base).passed


def test_lpvh1_detects_non_coadjoint_gamma(base):
    G = np.random.default_rng(3).normal(size=(3, 3, 3))
    C = ConnectionPair.flat(3, L).with_gamma(lambda q: G)
    assert not check_lpvh1(C, base).passed


def test_lpvh2_detects_wrong_curvature(base):
    C = wu_yang_pair()
    assert not check_lpvh2(C.with_F(lambda q: 2.0 * C.F(q)), base).passed


def test_lpvh3_detects_non_bianchi_curvature(base):
    C = wu_yang_pair()

    def F(q):
        out = C.F(q).copy()
        out[0, 1, 2] += q[0]
        out[0, 2, 1] -= q[0]
        return out

    assert not check_lpvh3(C.with_F(F), base).passed


# --- ICO


def test_ico_constant_section_flat(base):
    family = SectionFamily([SectionField.constant(E3, 3)])
    assert check_ico(ConnectionPair.flat(3, L), family, base).passed


def test_ico_fails_for_radial_section_flat(base):
    assert not check_ico(ConnectionPair.flat(3, L), RADIAL, base).passed


def test_ico_holds_for_ae_connection(base):
    assert check_ico(ae_pair(), RADIAL, base).passed


# --- AE solution


def test_ae_example_at_e3():
    P = solve_ae_so3(radial_section())
    np.testing.assert_allclose(P.coeffs(E3)[:, 0], [0.0, -1.0, 0.0], atol=1e-15)


def test_ae_residual_and_contraction(rng, base):
    s = radial_section()
    P = solve_ae_so3(s)
    assert ae_residual(P, s, base) <= 1e-12
    A = wu_yang_gauge_form()
    for q in base:
        y = rng.normal(size=3)
        assert np.max(np.abs(y @ P.coeffs(q) - A.value(q, y))) <= 1e-12


def test_ae_rejects_non_unit_section():
    with pytest.raises(InvalidActionError):
        solve_ae_so3(SectionField.constant([0.0, 0.0, 2.0], 3))


# --- averaged connection


@pytest.fixture(scope="module")
def averaged():
    return averaged_connection(ConnectionPair.flat(3, L), RADIAL, "circle", 64)


def test_averaged_connection_conditions(averaged, base):
    for check in (check_lpvh1, check_lpvh2, check_lpvh3):
        rep = check(averaged, base)
        assert rep.passed, rep
    assert check_ico(averaged, RADIAL, base).passed


def test_averaged_connection_matches_wu_yang(averaged, rng, base):
    A = wu_yang_gauge_form()
    for q in base:
        y = rng.normal(size=3)
        assert np.max(np.abs(y @ averaged.A(q) - A.value(q, y))) <= 1e-8


def test_averaged_connection_idempotent(averaged, base):
    corr = averaging_correction(averaged, RADIAL, "circle", 64)
    for q in base:
        assert np.max(np.abs(corr(q))) <= 1e-10


def test_averaged_connection_rejects_bad_family():
    with pytest.raises(InvalidActionError):
        averaged_connection(ConnectionPair.flat(3, L), SectionFamily([radial_section()] * 2), "circle")
    with pytest.raises(InvalidActionError):
        averaged_connection(ConnectionPair.flat(3, L), RADIAL, "torus")


def test_induced_structure_invariant(averaged, rng):
    S = induced_poisson_structure(averaged)
    act = section_circle_action(radial_section(), PoissonFiber.lie_poisson(L))
    gs = [random_group_element(act, rng) for _ in range(5)]
    rep = check_invariance(S, act, gs, phase_points(rng, 5), tol=1e-6)
    assert rep.passed, rep


# --- generalized Wong equations


def test_generalized_wong_matches_wong(rng):
    g = Metric.identity(3)
    f1 = generalized_wong_rhs(wu_yang_pair(), g)
    f2 = wong_rhs(wu_yang_potential(), L, g)
    for x in phase_points(rng, 100):
        assert np.max(np.abs(f1(x) - f2(x))) <= 1e-12


@pytest.mark.slow
def test_generalized_wong_conserves_energy_and_momentum():
    g = Metric.identity(3)
    x0 = join_state([0.0, 0.3, 0.1], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0])
    traj = integrate(generalized_wong_rhs(ae_pair(), g), x0, 10.0, 1e-3)
    rep = monitor(traj, {
        "H": kinetic_hamiltonian(g, 3),
        "J": PhaseFunction.from_fiber_field(wu_yang_momentum(), 3, 3),
    })
    for name in ("H", "J"):
        assert rep.entries[name].max_rel_drift <= 1e-8, (name, rep.entries[name])
