"""Fiberwise compact group actions, momentum maps and averaged gauge forms.

Supported groups are the circle, the torus T^r and SO(3), each with an
explicit chart on the group: angles for the abelian cases and exponential
coordinates on the ball |a| < pi for SO(3).  All Haar densities are
normalised so that averaging a constant returns the constant.

An averaged gauge form is assembled as

    A_i(q, y) = sum_k sum_j c[k, j] dJ_j/dq^i(q, Phi^q_{b_k}(y)) + C_i(q, y)

where b_k are group coordinates and c[k, j] the kernel weights of the
chosen quadrature (see ``averaging_kernel``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, DomainError, InvalidActionError
from .gauge import (
    GaugeForm,
    GaugePoissonStructure,
    LinearGaugePotential,
    PhaseFunction,
    horizontal_lift,
    join_state,
    split_state,
)
from .lie import (
    FiberField,
    LieAlgebraStructure,
    PoissonFiber,
    coad_flow_matrix,
    is_so3,
    so3,
)
from .numerics import (
    DEFAULT_PERIODIC_NODES,
    DEFAULT_SCHEME,
    TWO_PI,
    DiffScheme,
    PointCache,
    ball_rule,
    gauss_legendre,
    jacobian_fd,
    rk4_step,
    sawtooth_weights,
)
from .reports import CheckReport

GROUP_KINDS = ("circle", "torus", "so3")

DEFAULT_TORUS_NODES = 16  # periodic nodes per angle axis
DEFAULT_TORUS_RAY_NODES = 64  # Gauss-Legendre nodes in t for the torus kernel (precomputed once)
DEFAULT_RAY_NODES = 24  # Gauss-Legendre nodes in t for the SO(3) ball rule
DEFAULT_BALL_NODES = (16, 16, 16)

_CHECK_RNG_SEED = 20240611


@dataclass(frozen=True)
class SectionField:
    """Algebra-valued field s(q) with optional Jacobian ``jac(q)[a, i] = ds_a/dq^i``."""

    n: int
    m: int
    fn: Callable[[np.ndarray], np.ndarray]
    jac_fn: Callable[[np.ndarray], np.ndarray] | None = None
    domain: Callable[[np.ndarray], None] | None = None
    name: str = ""
    scheme: DiffScheme = DEFAULT_SCHEME

    def __call__(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.domain is not None:
            self.domain(q)
        out = np.asarray(self.fn(q), dtype=float)
        if out.shape != (self.n,):
            raise DimensionError(f"section must have length {self.n}, got {out.shape}")
        return out

    def jac(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.jac_fn is not None:
            if self.domain is not None:
                self.domain(q)
            return np.asarray(self.jac_fn(q), dtype=float)
        return jacobian_fd(self, q, self.scheme)

    def check_unit(self, points, tol: float = 1e-12) -> CheckReport:
        worst = max((abs(np.linalg.norm(self(q)) - 1.0) for q in points), default=0.0)
        return CheckReport("unit-section", worst <= tol, float(worst), tol, {"section": self.name})

    def padded(self, n_total: int, offset: int) -> "SectionField":
        """Embed into a direct-sum algebra at the given block offset."""
        n, base = self.n, self

        def fn(q):
            out = np.zeros(n_total)
            out[offset : offset + n] = base(q)
            return out

        def jac(q):
            out = np.zeros((n_total, base.m))
            out[offset : offset + n] = base.jac(q)
            return out

        return SectionField(n_total, self.m, fn, jac, self.domain, self.name, self.scheme)

    @classmethod
    def constant(cls, value, m: int, name: str = "") -> "SectionField":
        value = np.asarray(value, dtype=float)
        n = value.size
        return cls(n, m, lambda q: value.copy(), lambda q: np.zeros((n, m)), name=name or f"const{value.tolist()}")


def section_momentum(s: SectionField) -> FiberField:
    """J(q, y) = <s(q), y>."""
    return FiberField(
        lambda q, y: float(s(q) @ y),
        lambda q, y: s.jac(q).T @ y,
        lambda q, y: s(q),
        f"<{s.name},y>",
    )


def random_base_points(m: int, count: int, rng=None, radius=(0.5, 3.0)) -> list[np.ndarray]:
    """Points with |q| uniform in ``radius`` and uniformly random direction."""
    rng = rng if rng is not None else np.random.default_rng(_CHECK_RNG_SEED)
    out = []
    for _ in range(count):
        d = rng.normal(size=m)
        d /= np.linalg.norm(d)
        out.append(d * rng.uniform(*radius))
    return out


@dataclass(frozen=True, eq=False)
class FiberwiseAction:
    """A family of Hamiltonian G-actions acting along the fibers of Q x N.

    ``flow(q, b, y)`` realises Phi^q_{exp(b)}(y) for group coordinates b of
    length ``rank``.  Linear actions (generated by sections) also provide
    ``flow_matrices``; their momentum maps are <s_a(q), y>.
    """

    kind: str
    fiber: PoissonFiber
    momentum: tuple[FiberField, ...]
    flow_fn: Callable
    sections: tuple[SectionField, ...] | None = None
    m: int = 0
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in GROUP_KINDS:
            raise InvalidActionError(f"unsupported group kind {self.kind!r}")
        if self.kind == "circle" and self.rank != 1:
            raise InvalidActionError("a circle action has exactly one generator")
        if self.kind == "so3" and self.rank != 3:
            raise InvalidActionError("an SO(3) action has exactly three generators")

    @property
    def rank(self) -> int:
        return len(self.momentum)

    @property
    def linear(self) -> bool:
        return self.sections is not None

    def flow(self, q, b, y) -> np.ndarray:
        return np.asarray(self.flow_fn(np.asarray(q, float), np.atleast_1d(np.asarray(b, float)),
                                       np.asarray(y, float)), dtype=float)

    def flow_matrices(self, q, B) -> np.ndarray:
        """Stack of n x n matrices exp(ad*_{s_b(q)}) for group coordinates B (N, rank)."""
        if not self.linear:
            raise InvalidActionError("flow matrices exist only for section-generated actions")
        B = np.atleast_2d(np.asarray(B, dtype=float))
        S = np.stack([s(q) for s in self.sections])  # (rank, n)
        L = self.fiber.algebra_at(q)
        if self.kind == "so3":
            return coad_flow_matrix(L, B @ S, np.ones(len(B)))
        # commuting flows: compose one-parameter subgroups generator by generator
        E = np.broadcast_to(np.eye(self.fiber.n), (len(B), self.fiber.n, self.fiber.n)).copy()
        for j in range(self.rank):
            E = coad_flow_matrix(L, S[j], B[:, j]) @ E
        return E

    def generator(self, j: int, q, y) -> np.ndarray:
        return infinitesimal_generator(self.momentum[j], self.fiber)(q, y)


def infinitesimal_generator(J: FiberField, fiber: PoissonFiber) -> Callable:
    """Vertical field Upsilon^a = -Psi^{ab} dJ/dy^b."""

    def upsilon(q, y):
        return -fiber.psi(q, y) @ J.grad_y(q, y)

    return upsilon


def _linear_flow(kind):
    def flow(action_ref):
        def fn(q, b, y):
            return action_ref().flow_matrices(q, b[None, :])[0] @ y

        return fn

    return flow


def _make_linear_action(kind, fiber, sections, name):
    holder = {}
    fn = _linear_flow(kind)(lambda: holder["a"])
    action = FiberwiseAction(
        kind,
        fiber,
        tuple(section_momentum(s) for s in sections),
        fn,
        tuple(sections),
        sections[0].m,
        name,
    )
    holder["a"] = action
    return action


def check_periodicity(action: FiberwiseAction, points=None, tol: float = 1e-10) -> CheckReport:
    """Each generator's flow must return to the identity after time 2 pi."""
    rng = np.random.default_rng(_CHECK_RNG_SEED)
    if points is None:
        points = [(q, rng.normal(size=action.fiber.n)) for q in random_base_points(action.m, 5, rng)]
    worst = 0.0
    for q, y in points:
        for j in range(action.rank):
            b = np.zeros(action.rank)
            b[j] = TWO_PI
            worst = max(worst, float(np.linalg.norm(action.flow(q, b, y) - y)))
    return CheckReport("periodicity", worst <= tol, worst, tol, {"points": len(points)})


def check_commuting(action: FiberwiseAction, points=None, tol: float = 1e-8) -> CheckReport:
    rng = np.random.default_rng(_CHECK_RNG_SEED + 1)
    if points is None:
        points = [(q, rng.normal(size=action.fiber.n)) for q in random_base_points(action.m, 5, rng)]
    worst = 0.0
    for q, y in points:
        for i in range(action.rank):
            for j in range(i + 1, action.rank):
                bi = np.zeros(action.rank)
                bj = np.zeros(action.rank)
                bi[i], bj[j] = rng.uniform(0, TWO_PI, size=2)
                a = action.flow(q, bi, action.flow(q, bj, y))
                b = action.flow(q, bj, action.flow(q, bi, y))
                worst = max(worst, float(np.linalg.norm(a - b)))
    return CheckReport("commuting-flows", worst <= tol, worst, tol, {})


def section_circle_action(s: SectionField, fiber: PoissonFiber, points=None) -> FiberwiseAction:
    """(q, y) -> (q, Ad*_{exp t s(q)} y) with momentum map <s(q), y>."""
    if fiber.kind != "lie-poisson":
        raise InvalidActionError("section actions need a Lie-Poisson fiber")
    if fiber.algebra is not None and is_so3(fiber.algebra):
        rep = s.check_unit(points or random_base_points(s.m, 5))
        if not rep.passed:
            raise InvalidActionError(f"so(3) section must have unit norm (deviation {rep.residual:.3g})")
    action = _make_linear_action("circle", fiber, [s], f"circle[{s.name}]")
    rep = check_periodicity(action)
    if not rep.passed:
        raise InvalidActionError(f"flow of the section is not 2pi-periodic (error {rep.residual:.3g})")
    return action


def torus_action(sections: Sequence[SectionField], fiber: PoissonFiber) -> FiberwiseAction:
    action = _make_linear_action("torus", fiber, list(sections), "torus[" + ",".join(s.name for s in sections) + "]")
    for rep in (check_periodicity(action), check_commuting(action)):
        if not rep.passed:
            raise InvalidActionError(f"torus action fails {rep.name} (residual {rep.residual:.3g})")
    return action


def so3_frame_action(sections: Sequence[SectionField], fiber: PoissonFiber, points=None,
                     tol: float = 1e-8) -> FiberwiseAction:
    """SO(3) acting through three algebra-valued fields with [s_1, s_2] = s_3 (cyclically)."""
    if len(sections) != 3:
        raise InvalidActionError("an SO(3) action needs three sections")
    m = sections[0].m
    worst = 0.0
    for q in points or random_base_points(m, 5):
        L = fiber.algebra_at(q)
        S = [s(q) for s in sections]
        for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            worst = max(worst, float(np.linalg.norm(L.bracket(S[i], S[j]) - S[k])))
    if worst > tol:
        raise InvalidActionError(f"sections do not span an so(3) subalgebra (residual {worst:.3g})")
    return _make_linear_action("so3", fiber, list(sections), "so3[" + ",".join(s.name for s in sections) + "]")


def coadjoint_so3_action(m: int, fiber: PoissonFiber | None = None) -> FiberwiseAction:
    fiber = fiber or PoissonFiber.lie_poisson(so3())
    basis = [SectionField.constant(np.eye(3)[k], m, f"e{k + 1}") for k in range(3)]
    return so3_frame_action(basis, fiber)


def momentum_circle_action(J: FiberField, fiber: PoissonFiber, m: int, substeps: int = 32,
                           check_points=None) -> FiberwiseAction:
    """Circle action generated by an arbitrary momentum map.

    The flow of Upsilon = -Psi grad_y J is integrated with RK4; the user
    asserts 2 pi-periodicity, which is spot-checked here.
    """
    gen = infinitesimal_generator(J, fiber)

    def flow(q, b, y):
        t = float(b[0]) % TWO_PI
        steps = max(1, int(np.ceil(substeps * t)))
        h = t / steps
        z = np.array(y, dtype=float)
        for _ in range(steps):
            z = rk4_step(lambda w: gen(q, w), z, h)
        return z

    action = FiberwiseAction("circle", fiber, (J,), flow, None, m, f"circle[{J.name}]")
    rng = np.random.default_rng(_CHECK_RNG_SEED)
    pts = check_points or [(q, rng.normal(size=fiber.n)) for q in random_base_points(m, 5, rng)]

    # periodicity is checked on the integrated flow without the modulo shortcut
    def full_period(q, y):
        steps = int(np.ceil(substeps * TWO_PI))
        z = np.array(y, dtype=float)
        for _ in range(steps):
            z = rk4_step(lambda w: gen(q, w), z, TWO_PI / steps)
        return z

    worst = max(float(np.linalg.norm(full_period(q, y) - y)) for q, y in pts)
    if worst > 1e-6:
        raise InvalidActionError(f"flow of J is not 2pi-periodic (error {worst:.3g})")
    return action


# ---------------------------------------------------------------------------
# quadrature on the groups


def haar_rule(kind: str, rank: int, nodes=None) -> tuple[np.ndarray, np.ndarray]:
    """Group coordinates (N, rank) and normalised Haar weights (N,)."""
    if kind in ("circle", "torus"):
        n = int(nodes or DEFAULT_PERIODIC_NODES)
        t = TWO_PI * np.arange(n) / n
        grids = np.meshgrid(*([t] * rank), indexing="ij")
        B = np.stack([g.ravel() for g in grids], axis=-1)
        return B, np.full(len(B), 1.0 / n**rank)
    if kind == "so3":
        r, dirs, w_r, w_dir = ball_rule(tuple(nodes or DEFAULT_BALL_NODES), np.pi)
        # density sin^2(r/2)/(2 r^2) normalised by its total mass pi^2; r^2 cancels
        B = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
        W = np.outer(w_r * np.sin(r / 2) ** 2 / (2 * np.pi**2), w_dir).ravel()
        return B, W
    raise InvalidActionError(f"unsupported group kind {kind!r}")


@dataclass(frozen=True)
class AveragingKernel:
    """Group coordinates ``points`` (N, rank) and weights ``coeffs`` (N, rank)."""

    points: np.ndarray
    coeffs: np.ndarray
    description: dict


def _ray_factors(freqs: np.ndarray, t: np.ndarray):
    """g0(s) = <e^{i s a}> and g1(s) = <a e^{i s a}> over a in [0, 2pi], at s = t * freqs."""
    # Gauss-Legendre resolves e^{i s a} to round-off once nodes exceed ~ pi |s| + 40
    quad_nodes = int(4 * np.max(np.abs(freqs), initial=0.0)) + 64
    a, wa = gauss_legendre(quad_nodes, 0.0, TWO_PI)
    S = np.multiply.outer(t, freqs)  # (T, K)
    E = np.exp(1j * np.multiply.outer(S, a))  # (T, K, Q)
    g0 = E @ wa / TWO_PI
    g1 = E @ (wa * a) / TWO_PI
    return g0, g1


def _torus_fourier_kernel(rank: int, n: int, ray_nodes: int):
    """Weights exact for trigonometric polynomials of degree < n/2 per angle.

    With f_j sampled on the periodic grid b_l, each Fourier mode e^{i k.b}
    contributes K_j(k) = int_0^1 prod_l g_{[l = j]}(t k_l) dt, so the weight
    of node l for generator j is -Re sum_k K_j(k) e^{-i k.b_l} / n^r.
    """
    h = (n - 1) // 2
    freqs = np.arange(-h, h + 1)
    # the t-integrand oscillates like e^{i 2 pi h t}; resolve it the same way
    t, wt = gauss_legendre(max(ray_nodes, 4 * h + 64), 0.0, 1.0)
    g0, g1 = _ray_factors(freqs.astype(float), t)
    base = TWO_PI * np.arange(n) / n
    grid = np.stack([g.ravel() for g in np.meshgrid(*([base] * rank), indexing="ij")], axis=-1)
    modes = np.stack([g.ravel() for g in np.meshgrid(*([np.arange(len(freqs))] * rank), indexing="ij")], axis=-1)
    phase = np.exp(-1j * grid @ freqs[modes].T)  # (N, K)
    coeffs = np.empty((len(grid), rank))
    for j in range(rank):
        prod = np.ones((len(t), len(modes)), dtype=complex)
        for axis in range(rank):
            g = g1 if axis == j else g0
            prod *= g[:, modes[:, axis]]
        K = wt @ prod  # (K,)
        coeffs[:, j] = -np.real(phase @ K) / len(grid)
    return grid, coeffs


def averaging_kernel(kind: str, rank: int, nodes=None, ray_nodes: int | None = None) -> AveragingKernel:
    if isinstance(nodes, list):
        nodes = tuple(nodes)
    return _averaging_kernel(kind, rank, nodes, ray_nodes)


@lru_cache(maxsize=32)
def _averaging_kernel(kind: str, rank: int, nodes=None, ray_nodes: int | None = None) -> AveragingKernel:
    """Discretisation of A_i = -int_G int_0^1 dJ_a/dq^i(q, Phi_{exp(t a)} y) a^a dt dg.

    Circle: the substitution u = t a turns the double integral into
    (1/2pi) int_0^{2pi} (u - 2pi) f(u) du, evaluated with the spectral
    sawtooth rule.  Torus: the same idea mode by mode on a periodic grid.
    SO(3): product rule on the ball of exponential coordinates times
    Gauss-Legendre in t, with the normalised Haar weight.
    """
    if kind == "circle":
        n = int(nodes or DEFAULT_PERIODIC_NODES)
        t = TWO_PI * np.arange(n) / n
        w = sawtooth_weights(n) - np.pi / n
        return AveragingKernel(t[:, None], w[:, None], {"group": "circle", "nodes": n})
    nt = int(ray_nodes or DEFAULT_RAY_NODES)
    if kind == "torus":
        na = int(nodes or DEFAULT_TORUS_NODES)
        nt = int(ray_nodes or DEFAULT_TORUS_RAY_NODES)
        grid, coeffs = _torus_fourier_kernel(rank, na, nt)
        return AveragingKernel(grid, coeffs, {"group": "torus", "rank": rank, "nodes": na, "ray_nodes": nt})
    if kind == "so3":
        tau, omega = gauss_legendre(nt, 0.0, 1.0)
        counts = tuple(nodes or DEFAULT_BALL_NODES)
        G, WG = haar_rule("so3", 3, counts)
        points = (tau[None, :, None] * G[:, None, :]).reshape(-1, rank)
        coeffs = (-(WG[:, None] * omega[None, :])[..., None] * G[:, None, :]).reshape(-1, rank)
        return AveragingKernel(points, coeffs, {"group": "so3", "ball_nodes": list(counts), "ray_nodes": nt})
    raise InvalidActionError(f"unsupported group kind {kind!r}")


def group_average(fn: Callable[[np.ndarray], float | np.ndarray], action: FiberwiseAction, q, y,
                  nodes=None) -> np.ndarray:
    """<f>_G(q, y) = int_G f(Phi^q_g(y)) dg for f a function of the fiber point."""
    B, W = haar_rule(action.kind, action.rank, nodes)
    if action.linear:
        Ys = action.flow_matrices(q, B) @ np.asarray(y, float)
    else:
        Ys = [action.flow(q, b, y) for b in B]
    return sum(w * np.asarray(fn(z), dtype=float) for w, z in zip(W, Ys))


# ---------------------------------------------------------------------------
# averaged gauge forms


@dataclass(frozen=True)
class AveragedGaugeForm:
    form: GaugeForm
    group: str
    nodes: dict
    normalized: bool
    potential: LinearGaugePotential | None = None

    def __call__(self, q, y) -> np.ndarray:
        return self.form.value(q, y)


def _combined_kernel(action, normalize, nodes, ray_nodes):
    K = averaging_kernel(action.kind, action.rank, nodes, ray_nodes)
    coeffs = K.coeffs
    if normalize and action.kind in ("circle", "torus"):
        # Casimir offset C_i = pi sum_a <dJ_a/dq^i>_G, on the kernel's own periodic grid,
        # which makes <A_i>_G vanish; for SO(3) the odd chart weight already does
        coeffs = coeffs + np.pi / len(K.points)
    return K.points, coeffs, dict(K.description, normalized=bool(normalize))


def _linear_average_potential(action: FiberwiseAction, points, coeffs, name) -> LinearGaugePotential:
    n, m = action.fiber.n, action.m
    sections = action.sections

    def coeffs_fn(q):
        E = action.flow_matrices(q, points)  # (N, n, n)
        dS = np.stack([s.jac(q) for s in sections])  # (rank, n, m)
        # A_{a i} = sum_k E_k^T (sum_j c_kj ds_j/dq^i)
        V = np.einsum("kj,jai->kai", coeffs, dS)
        return np.einsum("kba,kbi->ai", E, V)

    domain = sections[0].domain
    return LinearGaugePotential(m, n, PointCache(coeffs_fn), None, domain, DiffScheme("central-4", 1e-3), name)


def _nonlinear_average_form(action: FiberwiseAction, points, coeffs, name) -> GaugeForm:
    m = action.m

    def value(q, y):
        out = np.zeros(m)
        if action.linear:
            Z = action.flow_matrices(q, points) @ y
        else:
            Z = (action.flow(q, b, y) for b in points)
        for z, c in zip(Z, coeffs):
            for j, J in enumerate(action.momentum):
                if c[j] != 0.0:
                    out += c[j] * J.grad_q(q, z)
        return out

    return GaugeForm(m, action.fiber.n, value, name=name)


def _average(action, normalize, nodes, ray_nodes, momentum=None) -> AveragedGaugeForm:
    points, coeffs, desc = _combined_kernel(action, normalize, nodes, ray_nodes)
    name = f"avg[{action.name}]"
    if momentum is not None:
        # user-supplied momentum components, averaged along the action's flow
        if len(momentum) != action.rank:
            raise InvalidActionError(f"need {action.rank} momentum components, got {len(momentum)}")
        action = FiberwiseAction(action.kind, action.fiber, tuple(momentum), action.flow_fn, None,
                                 action.m, action.name)
        return AveragedGaugeForm(_nonlinear_average_form(action, points, coeffs, name), action.kind, desc,
                                 normalize)
    if action.linear:
        P = _linear_average_potential(action, points, coeffs, name)
        return AveragedGaugeForm(P.gauge_form(), action.kind, desc, normalize, P)
    return AveragedGaugeForm(_nonlinear_average_form(action, points, coeffs, name), action.kind, desc, normalize)


def s1_average(action: FiberwiseAction, normalize: bool = True, nodes: int = DEFAULT_PERIODIC_NODES,
               momentum=None) -> AveragedGaugeForm:
    """Circle-averaged gauge form.

    With ``normalize`` the Casimir offset pi <dJ/dq^i> is added, giving the
    kernel (t - pi)/2pi and <A_i>_{S^1} = 0; without it C_i = 0 and the
    kernel is (t - 2pi)/2pi.
    """
    if action.kind != "circle":
        raise InvalidActionError("s1_average needs a circle action")
    return _average(action, normalize, nodes, None, momentum)


def torus_average(action: FiberwiseAction, normalize: bool = True, nodes: int = DEFAULT_TORUS_NODES,
                  ray_nodes: int = DEFAULT_TORUS_RAY_NODES, momentum=None) -> AveragedGaugeForm:
    if action.kind not in ("torus", "circle"):
        raise InvalidActionError("torus_average needs a torus action")
    rep = check_commuting(action)
    if not rep.passed:
        raise InvalidActionError("torus flows do not commute")
    torus = action if action.kind == "torus" else _as_torus(action)
    return _average(torus, normalize, nodes, ray_nodes, momentum)


def _as_torus(action: FiberwiseAction) -> FiberwiseAction:
    return FiberwiseAction("torus", action.fiber, action.momentum, action.flow_fn, action.sections,
                           action.m, action.name)


def so3_group_average(action: FiberwiseAction, normalize: bool = True, nodes=DEFAULT_BALL_NODES,
                      ray_nodes: int = DEFAULT_RAY_NODES, momentum=None) -> AveragedGaugeForm:
    if action.kind != "so3":
        raise InvalidActionError("so3_group_average needs an SO(3) action")
    return _average(action, normalize, tuple(nodes), ray_nodes, momentum)


def general_average_gauge_form(action: FiberwiseAction, normalize: bool = True, nodes=None,
                               ray_nodes=None) -> AveragedGaugeForm:
    if action.kind == "circle":
        return s1_average(action, normalize, nodes or DEFAULT_PERIODIC_NODES)
    if action.kind == "torus":
        return torus_average(action, normalize, nodes or DEFAULT_TORUS_NODES, ray_nodes or DEFAULT_TORUS_RAY_NODES)
    if action.kind == "so3":
        return so3_group_average(action, normalize, nodes or DEFAULT_BALL_NODES, ray_nodes or DEFAULT_RAY_NODES)
    raise InvalidActionError(f"unsupported group kind {action.kind!r}")


def reaverage_gauge_form(A0: GaugeForm, action: FiberwiseAction, normalize: bool = False, nodes=None,
                         ray_nodes=None) -> GaugeForm:
    """One averaging pass started from A0: A_i = A0_i + K[R_i] with R_i = dJ/dq^i + {A0_i, J}_N.

    For A0 = 0 this is the plain averaged form; a form with R = 0 is a fixed point.
    """
    points, coeffs, _ = _combined_kernel(action, normalize, nodes, ray_nodes)
    fiber = action.fiber

    def R(q, z, J):
        return J.grad_q(q, z) + A0.dy(q, z) @ (fiber.psi(q, z) @ J.grad_y(q, z))

    def value(q, y):
        out = np.array(A0.value(q, y), dtype=float)
        if action.linear:
            Z = action.flow_matrices(q, points) @ y
        else:
            Z = (action.flow(q, b, y) for b in points)
        for z, c in zip(Z, coeffs):
            for j, J in enumerate(action.momentum):
                if c[j] != 0.0:
                    out += c[j] * R(q, z, J)
        return out

    return GaugeForm(A0.m, A0.n, value, domain=A0.domain, name=f"reavg[{A0.name}]")


def haar_average_constant(kind: str, rank: int, nodes=None) -> float:
    _, W = haar_rule(kind, rank, nodes)
    return float(W.sum())


def so3_section_closed_form(s: SectionField) -> GaugeForm:
    """A_i(q, y) = <s(q) x y, ds/dq^i(q)>, with dA_i/dy = ds/dq^i x s."""

    def value(q, y):
        return s.jac(q).T @ np.cross(s(q), y)

    def dy(q, y):
        return np.cross(s.jac(q).T, s(q))

    return GaugeForm(s.m, 3, value, None, dy, s.domain, name=f"closed[{s.name}]")


# ---------------------------------------------------------------------------
# verification


def ic1_residual(A: GaugeForm, J: FiberField, fiber: PoissonFiber, i: int, q, y,
                 scheme: DiffScheme = DEFAULT_SCHEME) -> np.ndarray:
    """Psi grad_y R_i with R_i = dJ/dq^i + {A_i, J}_N."""

    def R(z):
        return float(J.grad_q(q, z)[i] + A.dy(q, z)[i] @ fiber.psi(q, z) @ J.grad_y(q, z))

    return fiber.psi(q, y) @ jacobian_fd(R, np.asarray(y, float), scheme)


def check_ic1(A: GaugeForm, momentum: Sequence[FiberField], fiber: PoissonFiber, samples,
              tol: float = 1e-6) -> CheckReport:
    worst = 0.0
    for q, y in samples:
        for J in momentum:
            for i in range(A.m):
                worst = max(worst, float(np.linalg.norm(ic1_residual(A, J, fiber, i, q, y))))
    return CheckReport("ic1", worst <= tol, worst, tol, {"samples": len(samples)})


def hor_upsilon_commutator(A: GaugeForm, J: FiberField, fiber: PoissonFiber, i: int, q, y,
                           scheme: DiffScheme = DEFAULT_SCHEME) -> np.ndarray:
    """[hor_i, Upsilon] as a vector field on Q x N, by finite differences."""
    m = A.m
    hor = horizontal_lift(A, fiber, i)
    ups = infinitesimal_generator(J, fiber)
    z0 = np.concatenate([np.asarray(q, float), np.asarray(y, float)])

    def X(z):
        return hor(z[:m], z[m:])

    def Y(z):
        return np.concatenate([np.zeros(m), ups(z[:m], z[m:])])

    return jacobian_fd(Y, z0, scheme) @ X(z0) - jacobian_fd(X, z0, scheme) @ Y(z0)


def check_commutators(A: GaugeForm, momentum: Sequence[FiberField], fiber: PoissonFiber, samples,
                      tol: float = 1e-6) -> CheckReport:
    worst = 0.0
    for q, y in samples:
        for J in momentum:
            for i in range(A.m):
                worst = max(worst, float(np.linalg.norm(hor_upsilon_commutator(A, J, fiber, i, q, y))))
    return CheckReport("hor-upsilon-commutators", worst <= tol, worst, tol, {"samples": len(samples)})


def check_ac(momentum: Sequence[FiberField], action: FiberwiseAction, samples, tol: float = 1e-8,
             nodes=None) -> CheckReport:
    """max |<dJ_a/dq^j>_G| over samples, generators and base directions."""
    worst = 0.0
    for q, y in samples:
        for J in momentum:
            avg = group_average(lambda z: J.grad_q(q, z), action, q, y, nodes)
            worst = max(worst, float(np.max(np.abs(avg))))
    return CheckReport("ac", worst <= tol, worst, tol, {"samples": len(samples)})


def lifted_action(action: FiberwiseAction, m: int, n: int, b) -> Callable:
    """Phase-space map (p, q, y) -> (p, q, Phi^q_b(y))."""

    def phi(x):
        p, q, y = split_state(x, m, n)
        return join_state(p, q, action.flow(q, b, y))

    return phi


def random_group_element(action: FiberwiseAction, rng) -> np.ndarray:
    if action.kind == "so3":
        d = rng.normal(size=3)
        return d / np.linalg.norm(d) * rng.uniform(0, np.pi)
    return rng.uniform(0.0, TWO_PI, size=action.rank)


def check_invariance(S: GaugePoissonStructure, action: FiberwiseAction, group_samples, phase_samples,
                     tol: float = 1e-8, curvature_nodes=None) -> CheckReport:
    """Compare D Phi M(x) D Phi^T with M(Phi(x)), and <F>_G with F."""
    m, n = S.m, S.n
    worst = 0.0
    for b, x in zip(group_samples, phase_samples):
        phi = lifted_action(action, m, n, b)
        D = jacobian_fd(phi, x)
        diff = D @ S.matrix(x) @ D.T - S.matrix(phi(x))
        worst = max(worst, float(np.max(np.abs(diff))))
    curv = 0.0
    for x in phase_samples:
        _, q, y = split_state(x, m, n)
        avg = group_average(lambda z: S.F(q, z), action, q, y, curvature_nodes)
        curv = max(curv, float(np.max(np.abs(avg - S.F(q, y)))))
    residual = max(worst, curv)
    return CheckReport(
        "invariance",
        residual <= tol,
        residual,
        tol,
        {"pushforward": worst, "curvature_average": curv, "pairs": len(phase_samples)},
    )


def first_integral_check(S: GaugePoissonStructure, H: PhaseFunction, J: FiberField, trajectory=None,
                         action: FiberwiseAction | None = None, samples=None, group_samples=None,
                         tol: float = 1e-8, h_tol: float = 1e-10) -> CheckReport:
    """Pointwise {H, J o tau} = 0 and conservation of J along a trajectory."""
    from .dynamics import monitor
    from .gauge import poisson_bracket

    m, n = S.m, S.n
    Jp = PhaseFunction.from_fiber_field(J, m, n)
    if samples is None:
        if trajectory is None:
            raise ValueError("need phase samples or a trajectory")
        idx = np.linspace(0, len(trajectory.states) - 1, 20).astype(int)
        samples = [trajectory.states[k] for k in idx]
    details = {}
    h_inv = 0.0
    if action is not None:
        rng = np.random.default_rng(_CHECK_RNG_SEED)
        gs = group_samples or [random_group_element(action, rng) for _ in samples]
        for b, x in zip(gs, samples):
            h_inv = max(h_inv, abs(H(lifted_action(action, m, n, b)(x)) - H(x)))
        details["hamiltonian_invariance"] = h_inv
    bracket = max(abs(poisson_bracket(S, H, Jp, x)) for x in samples)
    details["bracket"] = bracket
    drift = 0.0
    if trajectory is not None:
        rep = monitor(trajectory, {"J": Jp})
        drift = rep.entries["J"].max_rel_drift
        details["relative_drift"] = drift
    passed = h_inv <= h_tol and bracket <= tol and drift <= tol
    return CheckReport("first-integrals", passed, max(bracket, drift), tol, details)


def radial_domain(q, eps: float = 1e-9):
    if np.linalg.norm(q) < eps:
        raise DomainError(f"|q| < {eps:g}: field undefined at the origin", point=q)
