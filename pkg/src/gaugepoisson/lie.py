"""Structure constants, Lie-Poisson tensors, coadjoint operators and Casimirs.

Index convention: ``lam[a, b, c]`` stores the structure constant with upper
indices a, b and lower index c, so that ``{y_a, y_b} = lam[a, b, c] y_c``.

Coadjoint sign convention: ``ad_star(x, y)`` is chosen so that the vertical
Hamiltonian vector field of the linear function <x, y> equals ad*_x y.  On
so(3) with cyclic constants this gives ad*_x y = y cross x.  With this choice
ad*_x is the transpose of ad_x: <ad_x e, y> = <e, ad*_x y>.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import DimensionError
from .numerics import DEFAULT_SCHEME, DiffScheme, gradient_fd
from .reports import CheckReport


@dataclass(frozen=True, eq=False)
class LieAlgebraStructure:
    lam: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 3 or len(set(lam.shape)) != 1:
            raise DimensionError(f"structure constants must be an n x n x n array, got {lam.shape}")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    @property
    def is_abelian(self) -> bool:
        return not np.any(self.lam)

    @property
    def so3_copies(self) -> int:
        """k when the algebra is the direct sum of k copies of so(3), else 0."""
        cached = self.__dict__.get("_so3_copies")
        if cached is None:
            k = self.n // 3
            cached = k if self.n % 3 == 0 and k > 0 and np.array_equal(self.lam, _so3_sum_lam(k)) else 0
            object.__setattr__(self, "_so3_copies", cached)
        return cached

    def bracket(self, x, z) -> np.ndarray:
        """Lie bracket [x, z]_c = lam[a, b, c] x_a z_b."""
        return np.einsum("abc,a,b->c", self.lam, x, z)

    def ad_matrix(self, x) -> np.ndarray:
        """Matrix of ad_x acting on algebra vectors."""
        return np.einsum("abc,a->cb", self.lam, np.asarray(x, dtype=float))

    def ad_star_matrix(self, x) -> np.ndarray:
        """Matrix of ad*_x acting on coalgebra vectors (the transpose of ad_x)."""
        return np.einsum("abc,b->ac", -self.lam, np.asarray(x, dtype=float))


def _so3_lam() -> np.ndarray:
    lam = np.zeros((3, 3, 3))
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        lam[a, b, c] = 1.0
        lam[b, a, c] = -1.0
    return lam


def _so3_sum_lam(k: int) -> np.ndarray:
    lam = np.zeros((3 * k,) * 3)
    for j in range(k):
        sl = slice(3 * j, 3 * j + 3)
        lam[sl, sl, sl] = _so3_lam()
    return lam


def so3() -> LieAlgebraStructure:
    return LieAlgebraStructure(_so3_lam(), "so3")


def abelian(n: int) -> LieAlgebraStructure:
    return LieAlgebraStructure(np.zeros((n, n, n)), f"abelian({n})")


def direct_sum(*algebras: LieAlgebraStructure) -> LieAlgebraStructure:
    n = sum(a.n for a in algebras)
    lam = np.zeros((n, n, n))
    off = 0
    for a in algebras:
        sl = slice(off, off + a.n)
        lam[sl, sl, sl] = a.lam
        off += a.n
    return LieAlgebraStructure(lam, "+".join(a.name for a in algebras))


def is_so3(L: LieAlgebraStructure) -> bool:
    return L.n == 3 and L.so3_copies == 1


def check_structure_constants(L: LieAlgebraStructure, tol: float = 1e-12) -> CheckReport:
    lam = L.lam
    antisym = float(np.max(np.abs(lam + lam.transpose(1, 0, 2)), initial=0.0))
    # sum_mu lam[a,b,mu] lam[mu,c,nu] + cyclic(a,b,c)
    t = np.einsum("abm,mcn->abcn", lam, lam)
    jac = t + t.transpose(1, 2, 0, 3) + t.transpose(2, 0, 1, 3)
    jacobi = float(np.max(np.abs(jac), initial=0.0))
    residual = max(antisym, jacobi)
    return CheckReport(
        "structure-constants",
        residual <= tol,
        residual,
        tol,
        {"antisymmetry": antisym, "jacobi": jacobi},
    )


def lie_poisson_tensor(L: LieAlgebraStructure, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (L.n,):
        raise DimensionError(f"fiber point must have length {L.n}, got shape {y.shape}")
    return np.einsum("abc,c->ab", L.lam, y)


def ad_star(L: LieAlgebraStructure, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (L.n,) or y.shape != (L.n,):
        raise DimensionError("ad_star arguments must both have the algebra dimension")
    return -np.einsum("abc,c,b->a", L.lam, y, x)


def _so3_rotation(axis, angle):
    """Stack of rotation matrices about ``axis`` by ``angle`` (right-handed)."""
    axis = np.asarray(axis, dtype=float)
    angle = np.asarray(angle, dtype=float)
    norm = np.linalg.norm(axis, axis=-1)
    safe = np.where(norm > 0, norm, 1.0)
    u = axis / safe[..., None]
    theta = angle * norm
    K = np.zeros(u.shape[:-1] + (3, 3))
    K[..., 0, 1], K[..., 0, 2] = -u[..., 2], u[..., 1]
    K[..., 1, 0], K[..., 1, 2] = u[..., 2], -u[..., 0]
    K[..., 2, 0], K[..., 2, 1] = -u[..., 1], u[..., 0]
    s = np.sin(theta)[..., None, None]
    c = np.cos(theta)[..., None, None]
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def coad_flow_matrix(L: LieAlgebraStructure, x, t) -> np.ndarray:
    """exp(t ad*_x), broadcasting over leading axes of ``x`` and ``t``."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    k = L.so3_copies
    if k == 1:
        # ad*_x y = y cross x: rotation about x by angle -t|x|
        return _so3_rotation(x, -t)
    if k > 1:
        shape = np.broadcast_shapes(x.shape[:-1], t.shape)
        out = np.zeros(shape + (L.n, L.n))
        for j in range(k):
            sl = slice(3 * j, 3 * j + 3)
            out[..., sl, sl] = _so3_rotation(x[..., sl], -t)
        return out
    D = np.einsum("abc,...b->...ac", -L.lam, x)
    return scipy.linalg.expm(t[..., None, None] * D)


def adjoint_flow_matrix(L: LieAlgebraStructure, x, t) -> np.ndarray:
    """Ad_{exp(t x)} = exp(t ad_x) on the algebra; the transpose of coad_flow_matrix."""
    return np.swapaxes(coad_flow_matrix(L, x, t), -1, -2)


def coad_flow(L: LieAlgebraStructure, x, t: float, y0) -> np.ndarray:
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (L.n,) or np.shape(x) != (L.n,):
        raise DimensionError("coad_flow arguments must have the algebra dimension")
    return coad_flow_matrix(L, x, t) @ y0


@dataclass(frozen=True)
class FiberField:
    """Scalar field C(q, y) on Q x N with optional analytic partials."""

    fn: Callable[[np.ndarray, np.ndarray], float]
    grad_q_fn: Callable | None = None
    grad_y_fn: Callable | None = None
    name: str = ""
    scheme: DiffScheme = DEFAULT_SCHEME

    def __call__(self, q, y) -> float:
        return float(self.fn(np.asarray(q, dtype=float), np.asarray(y, dtype=float)))

    def grad_q(self, q, y) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.grad_q_fn is not None:
            return np.asarray(self.grad_q_fn(q, y), dtype=float)
        if q.size == 0:
            return np.zeros(0)
        return gradient_fd(lambda z: self.fn(z, y), q, self.scheme)

    def grad_y(self, q, y) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.grad_y_fn is not None:
            return np.asarray(self.grad_y_fn(q, y), dtype=float)
        return gradient_fd(lambda z: self.fn(q, z), y, self.scheme)

    @property
    def has_analytic_grad(self) -> bool:
        return self.grad_q_fn is not None and self.grad_y_fn is not None


def quadratic_casimir(lo: int = 0, hi: int = 3, name: str = "|y|^2") -> FiberField:
    sl = slice(lo, hi)

    def fn(q, y):
        return float(y[sl] @ y[sl])

    def gy(q, y):
        g = np.zeros_like(y)
        g[sl] = 2.0 * y[sl]
        return g

    return FiberField(fn, lambda q, y: np.zeros_like(q), gy, name)


def coordinate_field(alpha: int, name: str | None = None) -> FiberField:
    def gy(q, y):
        g = np.zeros_like(y)
        g[alpha] = 1.0
        return g

    return FiberField(lambda q, y: float(y[alpha]), lambda q, y: np.zeros_like(q), gy,
                      name or f"y{alpha + 1}")


@dataclass(frozen=True, eq=False)
class PoissonFiber:
    """Fiber Poisson structure Psi(q, y) together with registered Casimirs.

    For ``kind == "lie-poisson"`` the tensor is lam(q)[a, b, c] y_c; a
    q-independent algebra is given by ``algebra``, a q-dependent one by
    ``structure_fn``.
    """

    n: int
    psi_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    casimirs: tuple[FiberField, ...] = ()
    kind: str = "general"
    algebra: LieAlgebraStructure | None = None
    structure_fn: Callable[[np.ndarray], np.ndarray] | None = field(default=None)

    def psi(self, q, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.n,):
            raise DimensionError(f"fiber point must have length {self.n}, got shape {y.shape}")
        return np.asarray(self.psi_fn(np.asarray(q, dtype=float), y), dtype=float)

    def structure_at(self, q) -> np.ndarray:
        if self.structure_fn is not None:
            return np.asarray(self.structure_fn(np.asarray(q, dtype=float)), dtype=float)
        if self.algebra is not None:
            return self.algebra.lam
        raise ValueError("fiber has no Lie-Poisson structure constants")

    def algebra_at(self, q) -> LieAlgebraStructure:
        if self.structure_fn is None and self.algebra is not None:
            return self.algebra
        return LieAlgebraStructure(self.structure_at(q))

    @classmethod
    def lie_poisson(cls, L: LieAlgebraStructure, casimirs=None) -> "PoissonFiber":
        if casimirs is None:
            casimirs = default_casimirs(L)
        return cls(L.n, lambda q, y: lie_poisson_tensor(L, y), tuple(casimirs), "lie-poisson", L)

    @classmethod
    def varying(cls, n: int, structure_fn, casimirs=()) -> "PoissonFiber":
        """Lie-Poisson fiber whose structure constants depend on q."""
        return cls(
            n,
            lambda q, y: np.einsum("abc,c->ab", structure_fn(q), y),
            tuple(casimirs),
            "lie-poisson",
            None,
            structure_fn,
        )


def default_casimirs(L: LieAlgebraStructure) -> list[FiberField]:
    if L.is_abelian:
        return [coordinate_field(a) for a in range(L.n)]
    if is_so3(L):
        return [quadratic_casimir(0, 3)]
    if L.so3_copies > 1:
        return [quadratic_casimir(3 * k, 3 * k + 3, f"|y[{3 * k}:{3 * k + 3}]|^2") for k in range(L.n // 3)]
    return []


def fiber_bracket(f: FiberField, g: FiberField, fiber: PoissonFiber) -> Callable:
    """(q, y) -> Psi^{ab}(q, y) d_a f d_b g."""

    def bracket(q, y):
        return float(f.grad_y(q, y) @ fiber.psi(q, y) @ g.grad_y(q, y))

    return bracket


def is_casimir(C: FiberField, fiber: PoissonFiber, samples, tol: float = 1e-8) -> CheckReport:
    residual = 0.0
    for q, y in samples:
        r = fiber.psi(q, y) @ C.grad_y(q, y)
        residual = max(residual, float(np.linalg.norm(r)))
    return CheckReport("casimir", residual <= tol, residual, tol, {"function": C.name})
