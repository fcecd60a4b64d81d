"""Gauge forms, field strength, horizontal lifts and the assembled gauge
Poisson tensor on T*Q x N.

Phase points are flat arrays ordered ``(p_1..p_m, q^1..q^m, y^1..y^n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Callable

import numpy as np

from .errors import DimensionError, EvaluationError
from .lie import FiberField, LieAlgebraStructure, PoissonFiber
from .numerics import (
    DEFAULT_RANK_TOL,
    DEFAULT_SCHEME,
    DiffScheme,
    gradient_fd,
    jacobian_fd,
    matrix_rank,
)
from .reports import CheckReport

# outer differentiation of brackets: the seven-point stencil keeps analytic-partial
# structures near 1e-11 and FD-partial structures near 1e-8
JACOBI_SCHEME = DiffScheme("central-6", 1e-3)


def split_state(x, m: int, n: int):
    x = np.asarray(x, dtype=float)
    if x.shape != (2 * m + n,):
        raise DimensionError(f"phase point must have length {2 * m + n}, got shape {x.shape}")
    return x[:m], x[m : 2 * m], x[2 * m :]


def join_state(p, q, y) -> np.ndarray:
    return np.concatenate([np.asarray(p, float), np.asarray(q, float), np.asarray(y, float)])


@dataclass(frozen=True)
class PhaseFunction:
    """Scalar function on the phase space, evaluated on flat states."""

    fn: Callable[[np.ndarray], float]
    grad_fn: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""
    scheme: DiffScheme = DEFAULT_SCHEME

    def __call__(self, x) -> float:
        return float(self.fn(np.asarray(x, dtype=float)))

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.grad_fn is not None:
            return np.asarray(self.grad_fn(x), dtype=float)
        return gradient_fd(self.fn, x, self.scheme)

    @property
    def analytic(self) -> bool:
        return self.grad_fn is not None

    @classmethod
    def coordinate(cls, k: int, dim: int, name: str | None = None) -> "PhaseFunction":
        e = np.zeros(dim)
        e[k] = 1.0
        return cls(lambda x: float(x[k]), lambda x: e, name or f"x{k}")

    @classmethod
    def from_fiber_field(cls, C: FiberField, m: int, n: int) -> "PhaseFunction":
        """Pull a function of (q, y) back to the phase space."""

        def fn(x):
            _, q, y = split_state(x, m, n)
            return C(q, y)

        grad_fn = None
        if C.has_analytic_grad:

            def grad_fn(x):
                _, q, y = split_state(x, m, n)
                return np.concatenate([np.zeros(m), C.grad_q(q, y), C.grad_y(q, y)])

        return cls(fn, grad_fn, C.name)


HamiltonianFunction = PhaseFunction


def coordinate_functions(m: int, n: int) -> list[PhaseFunction]:
    names = [f"p{i + 1}" for i in range(m)] + [f"q{i + 1}" for i in range(m)] + [f"y{a + 1}" for a in range(n)]
    return [PhaseFunction.coordinate(k, 2 * m + n, nm) for k, nm in enumerate(names)]


@dataclass(frozen=True)
class GaugeForm:
    """A = A_i(q, y) dq^i with optional analytic partials.

    ``dq(q, y)[i, j] = dA_i/dq^j`` and ``dy(q, y)[i, a] = dA_i/dy^a``.
    ``domain(q)`` may raise DomainError for points where A is undefined.
    """

    m: int
    n: int
    value_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dq_fn: Callable | None = None
    dy_fn: Callable | None = None
    domain: Callable[[np.ndarray], None] | None = None
    scheme: DiffScheme = DEFAULT_SCHEME
    name: str = ""
    partials_exact: bool | None = None

    def _guard(self, q):
        if self.domain is not None:
            self.domain(q)

    def value(self, q, y) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        y = np.asarray(y, dtype=float)
        self._guard(q)
        out = np.asarray(self.value_fn(q, y), dtype=float)
        if not np.all(np.isfinite(out)):
            raise EvaluationError("gauge form is not finite", point=np.concatenate([q, y]))
        return out

    def dq(self, q, y) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        y = np.asarray(y, dtype=float)
        self._guard(q)
        if self.dq_fn is not None:
            return np.asarray(self.dq_fn(q, y), dtype=float)
        return jacobian_fd(lambda z: self.value(z, y), q, self.scheme)

    def dy(self, q, y) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        y = np.asarray(y, dtype=float)
        self._guard(q)
        if self.dy_fn is not None:
            return np.asarray(self.dy_fn(q, y), dtype=float)
        if self.n == 0:
            return np.zeros((self.m, 0))
        return jacobian_fd(lambda z: self.value(q, z), y, self.scheme)

    @property
    def analytic(self) -> bool:
        """True when both partials are exact rather than finite differences."""
        if self.partials_exact is not None:
            return self.partials_exact
        return self.dq_fn is not None and self.dy_fn is not None

    def check_partials(self, points, tol: float = 1e-6) -> CheckReport:
        """Compare supplied analytic partials with finite differences."""
        worst = 0.0
        for q, y in points:
            q = np.asarray(q, float)
            y = np.asarray(y, float)
            if self.dq_fn is not None:
                fd = jacobian_fd(lambda z: self.value(z, y), q, self.scheme)
                worst = max(worst, float(np.max(np.abs(fd - self.dq(q, y)))))
            if self.dy_fn is not None and self.n:
                fd = jacobian_fd(lambda z: self.value(q, z), y, self.scheme)
                worst = max(worst, float(np.max(np.abs(fd - self.dy(q, y)))))
        return CheckReport("gauge-partials", worst <= tol, worst, tol, {"form": self.name})

    @classmethod
    def zero(cls, m: int, n: int) -> "GaugeForm":
        return cls(
            m,
            n,
            lambda q, y: np.zeros(m),
            lambda q, y: np.zeros((m, m)),
            lambda q, y: np.zeros((m, n)),
            name="zero",
        )


@dataclass(frozen=True)
class LinearGaugePotential:
    """Algebra-valued 1-form A_{a i}(q) dq^i e_a.

    ``coeffs(q)`` has shape (n, m); ``dq(q)[a, i, j] = d A_{a i} / d q^j``.
    """

    m: int
    n: int
    coeffs_fn: Callable[[np.ndarray], np.ndarray]
    dq_fn: Callable | None = None
    domain: Callable[[np.ndarray], None] | None = None
    scheme: DiffScheme = DEFAULT_SCHEME
    name: str = ""

    def coeffs(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.domain is not None:
            self.domain(q)
        out = np.asarray(self.coeffs_fn(q), dtype=float)
        if out.shape != (self.n, self.m):
            raise DimensionError(f"potential must have shape {(self.n, self.m)}, got {out.shape}")
        return out

    def dq(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.dq_fn is not None:
            if self.domain is not None:
                self.domain(q)
            return np.asarray(self.dq_fn(q), dtype=float)
        return jacobian_fd(self.coeffs, q, self.scheme)

    def gauge_form(self) -> GaugeForm:
        """Contract with y: A_i(q, y) = y^a A_{a i}(q)."""
        return GaugeForm(
            self.m,
            self.n,
            lambda q, y: y @ self.coeffs(q),
            lambda q, y: np.einsum("a,aij->ij", y, self.dq(q)),
            lambda q, y: self.coeffs(q).T,
            self.domain,
            self.scheme,
            self.name,
            partials_exact=self.dq_fn is not None,
        )


def _antisym(F):
    return 0.5 * (F - np.swapaxes(F, -1, -2))


class FieldStrength:
    """F_ij(q, y) of a gauge form relative to a fiber Poisson tensor.

    F_ij = dA_j/dq^i - dA_i/dq^j + Psi^{ab} dA_i/dy^a dA_j/dy^b,
    antisymmetrised after evaluation.
    """

    def __init__(self, A: GaugeForm, fiber: PoissonFiber):
        self.A = A
        self.fiber = fiber

    def __call__(self, q, y) -> np.ndarray:
        dq = self.A.dq(q, y)
        dy = self.A.dy(q, y)
        F = dq.T - dq + dy @ self.fiber.psi(q, y) @ dy.T
        return _antisym(F)


def field_strength(A: GaugeForm, fiber: PoissonFiber) -> FieldStrength:
    return FieldStrength(A, fiber)


def linear_field_strength(P: LinearGaugePotential, L: LieAlgebraStructure) -> Callable:
    """q -> F[a, i, j] = d_i A_{a j} - d_j A_{a i} + [A_i, A_j]_a."""

    def F(q):
        A = P.coeffs(q)
        d = P.dq(q)  # d[a, i, j] = d_j A_{a i}
        dA = np.swapaxes(d, 1, 2) - d
        comm = np.einsum("bgc,bi,gj->cij", L.lam, A, A)
        return _antisym(dA + comm)

    return F


def horizontal_lift(A: GaugeForm, fiber: PoissonFiber, i: int) -> Callable:
    """Vector field hor_i on Q x N as a function (q, y) -> (m + n,) components."""
    if not 0 <= i < A.m:
        raise DimensionError(f"base index {i} out of range for m={A.m}")

    def hor(q, y):
        out = np.zeros(A.m + A.n)
        out[i] = 1.0
        out[A.m :] = fiber.psi(q, y).T @ A.dy(q, y)[i]
        return out

    return hor


@dataclass(frozen=True, eq=False)
class GaugePoissonStructure:
    """Gauge Poisson tensor Pi_A on T*Q x N.

    ``field_strength_fn`` replaces the computed F (used for connection
    pairs whose F is prescribed); ``fs_sign`` flips it, which only the
    negative-control scenario uses.
    """

    fiber: PoissonFiber
    gauge: GaugeForm
    field_strength_fn: Callable | None = None
    fs_sign: float = 1.0

    def __post_init__(self):
        if self.gauge.n != self.fiber.n:
            raise DimensionError("gauge form and fiber disagree on the fiber dimension")

    @property
    def m(self) -> int:
        return self.gauge.m

    @property
    def n(self) -> int:
        return self.fiber.n

    @property
    def dim(self) -> int:
        return 2 * self.m + self.n

    @property
    def analytic(self) -> bool:
        return self.gauge.analytic

    def F(self, q, y) -> np.ndarray:
        if self.field_strength_fn is not None:
            F = np.asarray(self.field_strength_fn(q, y), dtype=float)
        else:
            F = FieldStrength(self.gauge, self.fiber)(q, y)
        return self.fs_sign * F

    def matrix(self, x) -> np.ndarray:
        m, n = self.m, self.n
        _, q, y = split_state(x, m, n)
        psi = self.fiber.psi(q, y)
        dy = self.gauge.dy(q, y)
        M = np.zeros((self.dim, self.dim))
        M[:m, :m] = self.F(q, y)
        M[:m, m : 2 * m] = np.eye(m)
        M[m : 2 * m, :m] = -np.eye(m)
        # {p_i, y^a} = -Psi^{ab} dA_i/dy^b
        py = -dy @ psi.T
        M[:m, 2 * m :] = py
        M[2 * m :, :m] = -py.T
        M[2 * m :, 2 * m :] = psi
        return M


def assemble_bracket_matrix(S: GaugePoissonStructure, x) -> np.ndarray:
    return S.matrix(x)


def poisson_bracket(S: GaugePoissonStructure, f: PhaseFunction, g: PhaseFunction, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(f.grad(x) @ S.matrix(x) @ g.grad(x))


def rank_at(S: GaugePoissonStructure, x, tol: float = DEFAULT_RANK_TOL) -> int:
    return matrix_rank(S.matrix(x), tol)


def jacobiator(S: GaugePoissonStructure, f: PhaseFunction, g: PhaseFunction, h: PhaseFunction, x,
               outer: DiffScheme = JACOBI_SCHEME) -> float:
    """{f,{g,h}} + {g,{h,f}} + {h,{f,g}} with brackets differentiated numerically."""
    x = np.asarray(x, dtype=float)
    M = S.matrix(x)

    def bracket_fn(u, v):
        return lambda z: float(u.grad(z) @ S.matrix(z) @ v.grad(z))

    total = 0.0
    for a, b, c in ((f, g, h), (g, h, f), (h, f, g)):
        inner = gradient_fd(bracket_fn(b, c), x, outer)
        total += float(a.grad(x) @ M @ inner)
    return total


def jacobiator_tensor(S: GaugePoissonStructure, x, outer: DiffScheme = JACOBI_SCHEME) -> np.ndarray:
    """Jacobiator of all coordinate triples: J[a,b,c] = M^{ad} d_d M^{bc} + cyclic."""
    x = np.asarray(x, dtype=float)
    M = S.matrix(x)
    dM = jacobian_fd(S.matrix, x, outer)  # dM[b, c, d] = d_d M^{bc}
    t = np.einsum("ad,bcd->abc", M, dM)
    return t + t.transpose(1, 2, 0) + t.transpose(2, 0, 1)


def check_jacobi(S: GaugePoissonStructure, points, tol: float | None = None) -> CheckReport:
    if tol is None:
        tol = 1e-10 if S.analytic else 1e-6
    worst = 0.0
    worst_triple = None
    for x in points:
        J = np.abs(jacobiator_tensor(S, x))
        idx = np.unravel_index(np.argmax(J), J.shape)
        if J[idx] > worst:
            worst = float(J[idx])
            worst_triple = tuple(int(i) for i in sorted(idx))
    n_triples = len(list(combinations(range(S.dim), 3)))
    return CheckReport(
        "jacobi",
        worst <= tol,
        worst,
        tol,
        {"points": len(points), "triples": n_triples, "worst_triple": worst_triple},
    )


def check_antisymmetry(S: GaugePoissonStructure, points) -> CheckReport:
    m = S.m
    worst = 0.0
    for x in points:
        M = S.matrix(x)
        worst = max(
            worst,
            float(np.max(np.abs(M + M.T))),
            float(np.max(np.abs(M[m : 2 * m, m : 2 * m]))),
            float(np.max(np.abs(M[m : 2 * m, 2 * m :]))),
            float(np.max(np.abs(M[:m, m : 2 * m] - np.eye(m)))),
        )
    return CheckReport("antisymmetry", worst == 0.0, worst, 0.0, {"points": len(points)})


def check_rank(S: GaugePoissonStructure, points, tol: float = DEFAULT_RANK_TOL) -> CheckReport:
    """rank Pi_A = 2 m + rank Psi(y), exactly, at every point."""
    mismatches = []
    ranks = []
    for x in points:
        _, q, y = split_state(x, S.m, S.n)
        r = rank_at(S, x, tol)
        expected = 2 * S.m + matrix_rank(S.fiber.psi(q, y), tol)
        ranks.append(r)
        if r != expected:
            mismatches.append({"rank": r, "expected": expected})
    return CheckReport(
        "rank",
        not mismatches,
        float(len(mismatches)),
        0.0,
        {"ranks": sorted(set(ranks)), "mismatches": mismatches[:5]},
    )
