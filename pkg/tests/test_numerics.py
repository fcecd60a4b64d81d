import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaugepoisson.errors import DimensionError, EvaluationError, IntegrationError
from gaugepoisson.numerics import (
    TWO_PI,
    DiffScheme,
    QuadratureRule,
    ball_rule,
    gauss_legendre,
    integrate_periodic,
    integrate_sawtooth,
    jacobian_fd,
    matrix_exp_action,
    matrix_rank,
    periodic_rule,
    rk4_step,
    sawtooth_weights,
)

finite = st.floats(-5, 5, allow_nan=False)


def test_quadrature_rule_validation():
    with pytest.raises(ValueError):
        QuadratureRule("periodic-trapezoid", 1)
    with pytest.raises(ValueError):
        QuadratureRule("simpson", 8)
    t, w = periodic_rule(16).nodes_weights()
    assert np.isclose(w.sum(), TWO_PI)
    _, w = QuadratureRule("gauss-legendre", 7, (0.0, 3.0)).nodes_weights()
    assert np.isclose(w.sum(), 3.0)


def test_periodic_constants_and_cosine():
    assert abs(integrate_periodic(np.cos, periodic_rule(64))) < 1e-14
    assert integrate_periodic(lambda t: 1.0, periodic_rule(8)) == pytest.approx(TWO_PI, abs=1e-15)


@pytest.mark.parametrize("k", [1, 5, 15, 31])
def test_periodic_kills_low_harmonics(k):
    r = periodic_rule(64)
    assert abs(integrate_periodic(lambda t: np.sin(k * t), r)) < 1e-13
    assert abs(integrate_periodic(lambda t: np.cos(k * t), r)) < 1e-13


def test_sawtooth_rule_on_non_periodic_integrand():
    # int_0^{2pi} (t - pi)(-sin t) dt = 2 pi by parts; the sawtooth rule is exact for this integrand
    val = TWO_PI * integrate_sawtooth(lambda t: -np.sin(t), periodic_rule(128))
    assert val == pytest.approx(TWO_PI, abs=1e-12)


def test_plain_trapezoid_on_sawtooth_integrand_is_only_second_order():
    # the periodic sum of the discontinuous product converges like 1/n, not to 1e-12
    f = lambda t: (t - np.pi) * (-np.sin(t))  # noqa: E731
    err128 = abs(integrate_periodic(f, periodic_rule(128)) - TWO_PI)
    err256 = abs(integrate_periodic(f, periodic_rule(256)) - TWO_PI)
    assert err128 > 1e-4
    assert err256 < err128


def test_sawtooth_weights_sum_to_zero():
    for n in (4, 17, 64, 256):
        assert abs(sawtooth_weights(n).sum()) < 1e-13


def test_nonfinite_integrand_reports_node():
    with pytest.raises(EvaluationError) as exc:
        integrate_periodic(lambda t: np.inf if t == 0 else 1.0, periodic_rule(8))
    assert exc.value.point is not None


def test_gauss_legendre_polynomial_exactness():
    x, w = gauss_legendre(5, 0.0, 2.0)
    assert (w * x**9).sum() == pytest.approx(2.0**10 / 10, rel=1e-13)


def test_ball_rule_volume():
    r, dirs, w_r, w_dir = ball_rule((12, 8, 8))
    assert w_dir.sum() == pytest.approx(4 * np.pi, rel=1e-13)
    assert (w_r * r**2).sum() * w_dir.sum() == pytest.approx(4 / 3 * np.pi**4, rel=1e-12)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)


def test_jacobian_identity_and_constant():
    x = np.array([0.3, -1.2, 4.0])
    assert np.allclose(jacobian_fd(lambda z: z, x), np.eye(3), atol=1e-10)
    assert np.allclose(jacobian_fd(lambda z: np.ones(2), x), 0.0)


def test_jacobian_unit_vector_map():
    J = jacobian_fd(lambda q: q / np.linalg.norm(q), np.array([0.0, 0.0, 1.0]))
    assert np.allclose(J, np.diag([1.0, 1.0, 0.0]), atol=1e-8)


@given(st.lists(finite, min_size=3, max_size=3), st.sampled_from(["central-2", "central-4", "central-6"]))
@settings(max_examples=30, deadline=None)
def test_jacobian_exact_on_quadratics(x, scheme):
    x = np.array(x)
    A = np.array([[1.0, 2.0, -1.0], [0.5, 0.0, 3.0]])
    f = lambda z: A @ z + np.array([z[0] * z[1], z[2] ** 2])  # noqa: E731
    exact = A + np.array([[x[1], x[0], 0.0], [0.0, 0.0, 2 * x[2]]])
    assert np.allclose(jacobian_fd(f, x, DiffScheme(scheme)), exact, atol=1e-8)


def test_diff_scheme_validation():
    with pytest.raises(ValueError):
        DiffScheme("forward")
    with pytest.raises(ValueError):
        DiffScheme("central-2", 0.0)
    assert np.allclose(DiffScheme(step=1e-5).steps(np.array([0.1, -300.0])), [1e-5, 3e-3])


def test_jacobian_nonfinite():
    with pytest.raises(EvaluationError):
        jacobian_fd(lambda z: np.where(z > 0, z, np.nan), np.array([0.0]))


def test_matrix_rank_examples():
    assert matrix_rank(np.zeros((3, 3))) == 0
    assert matrix_rank(np.eye(4)) == 4
    psi = np.array([[0, 1, 0], [-1, 0, 0], [0, 0, 0.0]])
    assert matrix_rank(psi) == 2


@given(st.integers(1, 6), st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_matrix_rank_invariant_under_orthogonal_conjugation(r, seed):
    g = np.random.default_rng(seed)
    B = g.normal(size=(6, r))
    M = B @ B.T
    Q, _ = np.linalg.qr(g.normal(size=(6, 6)))
    P = np.eye(6)[g.permutation(6)]
    assert matrix_rank(M) == r
    assert matrix_rank(Q @ M @ Q.T) == r
    assert matrix_rank(P @ M) == r


def test_matrix_exp_action_examples():
    v = np.array([1.0, 0.0, 0.0])
    assert np.array_equal(matrix_exp_action(np.zeros((3, 3)), 2.0, v), v)
    D = np.array([[0, 1, 0], [-1, 0, 0], [0, 0, 0.0]])  # ad*_{e3}: y -> y x e3
    assert np.allclose(matrix_exp_action(D, np.pi / 2, v), [0.0, -1.0, 0.0], atol=1e-12)
    assert np.allclose(matrix_exp_action(D, 0.0, v), v)
    with pytest.raises(DimensionError):
        matrix_exp_action(D, 1.0, np.ones(2))


def test_matrix_exp_action_accuracy_large_norm():
    D = np.array([[0, 1, 0], [-1, 0, 0], [0, 0, 0.0]]) * 10.0
    v = np.array([1.0, 0.0, 0.0])
    assert np.allclose(matrix_exp_action(D, 1.0, v), [np.cos(10), -np.sin(10), 0.0], rtol=0, atol=1e-12)


def test_rk4_examples():
    x = np.array([0.4, 1.0])
    assert np.array_equal(rk4_step(lambda z: np.zeros(2), x, 0.1), x)
    # one classical step on x' = x reproduces the degree-4 Taylor polynomial of e^h exactly;
    # its distance to e^0.1 is the truncation error h^5/120 ~ 8.5e-8
    step = rk4_step(lambda z: z, np.array([1.0]), 0.1)[0]
    h = 0.1
    assert step == pytest.approx(1 + h + h**2 / 2 + h**3 / 6 + h**4 / 24, abs=1e-15)
    assert abs(step - np.exp(h)) == pytest.approx(h**5 / 120, rel=0.05)
    rot = lambda z: np.array([-z[1], z[0]])  # noqa: E731
    z, h = np.array([1.0, 0.0]), TWO_PI / 1000
    for _ in range(1000):
        z = rk4_step(rot, z, h)
    assert np.allclose(z, [1.0, 0.0], atol=1e-9)


def test_rk4_order():
    def err(h):
        z = np.array([1.0])
        for _ in range(int(round(1 / h))):
            z = rk4_step(lambda u: u, z, h)
        return abs(z[0] - np.e)

    order = np.log2(err(0.1) / err(0.05))
    assert 3.8 <= order <= 4.2


def test_rk4_nonfinite_stage():
    with pytest.raises(IntegrationError) as exc:
        rk4_step(lambda z: z * np.inf, np.array([1.0]), 0.1, t=2.5)
    assert exc.value.t == 2.5
