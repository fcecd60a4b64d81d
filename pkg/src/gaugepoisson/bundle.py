"""Chart representation of connection pairs (nabla, F) on a Lie-Poisson bundle.

In one chart the fiber is h* with structure constants lam(q).  A linear
connection acts on coalgebra-valued sections as

    nabla_i zeta = d_i zeta - Gamma_i zeta,

and for connections of coadjoint type Gamma_i = ad*_{A_i}.  The dual
connection on algebra-valued sections is nabla*_i eta = d_i eta + Gamma_i^T eta,
which for Gamma_i = ad*_{A_i} is d_i eta + [A_i, eta].  F is algebra-valued,
stored as F[a, i, j].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import Metric
from .errors import DimensionError, InvalidActionError
from .gauge import GaugeForm, GaugePoissonStructure, LinearGaugePotential, split_state
from .lie import LieAlgebraStructure, PoissonFiber, adjoint_flow_matrix, check_structure_constants
from .numerics import DEFAULT_PERIODIC_NODES, TWO_PI, DiffScheme, PointCache, jacobian_fd, sawtooth_weights
from .reports import CheckReport
from .symmetry import SectionField, averaging_kernel

CHART_SCHEME = DiffScheme("central-4", 1e-3)


def _ad_star_stack(lam: np.ndarray, X: np.ndarray) -> np.ndarray:
    """ad*_{X_i} for each column X[:, i]: shape (m, n, n)."""
    return np.einsum("abc,bi->iac", -lam, X)


@dataclass(frozen=True, eq=False)
class ConnectionPair:
    """Chart data (lam(q), Gamma(q), F(q)) with an optional potential A(q).

    ``gamma_fn(q)`` has shape (m, n, n), ``F_fn(q)`` shape (n, m, m) and
    ``potential_fn(q)`` shape (n, m), with Gamma_i = ad*_{A_i} when given.
    """

    m: int
    n: int
    structure_fn: Callable[[np.ndarray], np.ndarray]
    gamma_fn: Callable[[np.ndarray], np.ndarray]
    F_fn: Callable[[np.ndarray], np.ndarray]
    potential_fn: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""
    scheme: DiffScheme = CHART_SCHEME
    constant_structure: bool = False

    def lam(self, q) -> np.ndarray:
        return np.asarray(self.structure_fn(np.asarray(q, float)), dtype=float)

    def algebra(self, q) -> LieAlgebraStructure:
        if self.constant_structure:
            cached = self.__dict__.get("_algebra")
            if cached is None:
                cached = LieAlgebraStructure(self.lam(q))
                object.__setattr__(self, "_algebra", cached)
            return cached
        return LieAlgebraStructure(self.lam(q))

    def Gamma(self, q) -> np.ndarray:
        G = np.asarray(self.gamma_fn(np.asarray(q, float)), dtype=float)
        if G.shape != (self.m, self.n, self.n):
            raise DimensionError(f"connection coefficients must be {(self.m, self.n, self.n)}, got {G.shape}")
        return G

    def F(self, q) -> np.ndarray:
        F = np.asarray(self.F_fn(np.asarray(q, float)), dtype=float)
        if F.shape != (self.n, self.m, self.m):
            raise DimensionError(f"curvature must be {(self.n, self.m, self.m)}, got {F.shape}")
        return F

    def A(self, q) -> np.ndarray:
        if self.potential_fn is None:
            raise ValueError(f"connection pair {self.name!r} has no chart potential")
        return np.asarray(self.potential_fn(np.asarray(q, float)), dtype=float)

    @property
    def has_potential(self) -> bool:
        return self.potential_fn is not None

    def dlam(self, q) -> np.ndarray:
        """dlam[..., j] = d lam / d q^j."""
        if self.constant_structure:
            return np.zeros((self.n,) * 3 + (self.m,))
        return jacobian_fd(self.lam, np.asarray(q, float), self.scheme)

    def dGamma(self, q) -> np.ndarray:
        """dGamma[i, a, b, j] = d Gamma_i[a, b] / d q^j."""
        return jacobian_fd(self.Gamma, np.asarray(q, float), self.scheme)

    def dual(self, q, eta, deta) -> np.ndarray:
        """nabla*_i eta as columns (n, m), given eta(q) and deta[a, i] = d_i eta_a."""
        return deta + np.einsum("iba,b->ai", self.Gamma(q), eta)

    def potential(self) -> LinearGaugePotential:
        return LinearGaugePotential(self.m, self.n, self.A, None, None, self.scheme, self.name)

    @classmethod
    def from_potential(cls, P: LinearGaugePotential, L: LieAlgebraStructure | Callable, F_fn=None,
                       name: str = "") -> "ConnectionPair":
        """nabla = d - ad*_A, with F = dA + [A, A] unless given."""
        constant = isinstance(L, LieAlgebraStructure)
        structure_fn = (lambda q: L.lam) if constant else L

        def gamma(q):
            return _ad_star_stack(structure_fn(q), P.coeffs(q))

        if F_fn is None:

            def F_fn(q):
                A = P.coeffs(q)
                d = P.dq(q)
                comm = np.einsum("bgc,bi,gj->cij", structure_fn(q), A, A)
                return np.swapaxes(d, 1, 2) - d + comm

        return cls(P.m, P.n, structure_fn, gamma, F_fn, P.coeffs, name or P.name, P.scheme, constant)

    @classmethod
    def flat(cls, m: int, L: LieAlgebraStructure | Callable, name: str = "flat") -> "ConnectionPair":
        constant = isinstance(L, LieAlgebraStructure)
        structure_fn = (lambda q: L.lam) if constant else L
        n = structure_fn(np.zeros(m)).shape[0]
        return cls(
            m,
            n,
            structure_fn,
            lambda q: np.zeros((m, n, n)),
            lambda q: np.zeros((n, m, m)),
            lambda q: np.zeros((n, m)),
            name,
            constant_structure=constant,
        )

    def with_F(self, F_fn, name: str | None = None) -> "ConnectionPair":
        return ConnectionPair(self.m, self.n, self.structure_fn, self.gamma_fn, F_fn, self.potential_fn,
                              name or self.name, self.scheme, self.constant_structure)

    def with_gamma(self, gamma_fn, name: str | None = None) -> "ConnectionPair":
        return ConnectionPair(self.m, self.n, self.structure_fn, gamma_fn, self.F_fn, None,
                              name or self.name, self.scheme, self.constant_structure)


@dataclass(frozen=True)
class SectionFamily:
    """Basis images a -> s_a(q) of the symmetry algebra."""

    sections: tuple[SectionField, ...]

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(self.sections))
        if not self.sections:
            raise ValueError("a section family needs at least one section")

    def __len__(self) -> int:
        return len(self.sections)

    def at(self, q) -> np.ndarray:
        return np.stack([s(q) for s in self.sections])

    def of(self, coeffs, q) -> np.ndarray:
        """Image of the algebra element with the given coordinates."""
        return np.asarray(coeffs, float) @ self.at(q)


def check_lpvh1(C: ConnectionPair, samples, tol: float = 1e-6) -> CheckReport:
    """Compatibility of nabla with the fiber bracket on basis sections e_alpha.

    Residual: ad*_{e_a} built from d_i lam, minus [Gamma_i, ad*_{e_a}], minus
    ad*_{Gamma_i^T e_a}.  It vanishes identically for Gamma_i = ad*_{A_i}.
    """
    worst = 0.0
    n = C.n
    E = np.eye(n)
    for q in samples:
        lam = C.lam(q)
        dlam = C.dlam(q)
        G = C.Gamma(q)
        D = _ad_star_stack(lam, E)  # D[alpha] = ad*_{e_alpha}
        for i in range(C.m):
            dD = _ad_star_stack(dlam[..., i], E)
            GtE = G[i].T  # columns Gamma_i^T e_alpha
            R = dD - (G[i] @ D - D @ G[i]) - _ad_star_stack(lam, GtE)
            worst = max(worst, float(np.max(np.abs(R))))
    return CheckReport("lpvh1", worst <= tol, worst, tol, {"samples": len(samples), "pair": C.name})


def chart_curvature(C: ConnectionPair, q) -> np.ndarray:
    """[nabla_i, nabla_j] as matrices (m, m, n, n)."""
    G = C.Gamma(q)
    dG = C.dGamma(q)  # [i, a, b, j] = d_j Gamma_i
    d_i_Gj = np.einsum("jabi->ijab", dG)
    curv = -d_i_Gj + np.swapaxes(d_i_Gj, 0, 1)
    curv += np.einsum("iab,jbc->ijac", G, G) - np.einsum("jab,ibc->ijac", G, G)
    return curv


def check_lpvh2(C: ConnectionPair, samples, tol: float = 1e-6) -> CheckReport:
    """Curvature of nabla equals -ad*_F in the chart."""
    worst = 0.0
    for q in samples:
        curv = chart_curvature(C, q)
        F = C.F(q)
        adF = np.einsum("abc,bij->ijac", -C.lam(q), F)
        worst = max(worst, float(np.max(np.abs(curv + adF))))
    return CheckReport("lpvh2", worst <= tol, worst, tol, {"samples": len(samples), "pair": C.name})


def covariant_derivative_F(C: ConnectionPair, q) -> np.ndarray:
    """(nabla*_i F_jk)[a] as an array (m, n, m, m)."""
    q = np.asarray(q, float)
    dF = jacobian_fd(C.F, q, C.scheme)  # [a, j, k, i]
    G = C.Gamma(q)
    return np.einsum("ajki->iajk", dF) + np.einsum("iba,bjk->iajk", G, C.F(q))


def check_lpvh3(C: ConnectionPair, samples, tol: float = 1e-6) -> CheckReport:
    """Covariant constancy of F read as the Bianchi identity.

    The residual is the cyclic sum of nabla*_i F_jk over (i, j, k).  The
    non-cyclic norm max |nabla*_i F_jk| is reported in the details.
    """
    worst = 0.0
    full = 0.0
    for q in samples:
        D = covariant_derivative_F(C, q)
        cyc = D.transpose(1, 0, 2, 3) + D.transpose(1, 2, 3, 0) + D.transpose(1, 3, 0, 2)  # [a, i, j, k]
        worst = max(worst, float(np.max(np.abs(cyc), initial=0.0)))
        full = max(full, float(np.max(np.abs(D), initial=0.0)))
    return CheckReport("lpvh3", worst <= tol, worst, tol,
                       {"samples": len(samples), "pair": C.name, "max_covariant_derivative": full})


def dual_derivative_sections(C: ConnectionPair, family: SectionFamily, q) -> np.ndarray:
    """nabla*_i s_a stacked as (r, n, m)."""
    return np.stack([C.dual(q, s(q), s.jac(q)) for s in family.sections])


def check_ico(C: ConnectionPair, family: SectionFamily, samples, tol: float = 1e-6) -> CheckReport:
    """Operator norm of ad_{nabla*_i s_a} on the fiber algebra."""
    worst = 0.0
    direct = 0.0
    for q in samples:
        L = C.algebra(q)
        N = dual_derivative_sections(C, family, q)
        for a in range(len(family)):
            for i in range(C.m):
                worst = max(worst, float(np.linalg.norm(L.ad_matrix(N[a, :, i]), 2)))
        direct = max(direct, float(np.max(np.abs(N))))
    return CheckReport("ico", worst <= tol, worst, tol,
                       {"samples": len(samples), "pair": C.name, "max_dual_derivative": direct})


def solve_ae_so3(s: SectionField, samples=None, tol: float = 1e-10) -> LinearGaugePotential:
    """A_i = -s x d_i s, the solution of s x A_i = d_i s for a unit section."""
    from .symmetry import random_base_points

    pts = samples if samples is not None else random_base_points(s.m, 5)
    rep = s.check_unit(pts)
    if not rep.passed:
        raise InvalidActionError(f"section must have unit norm (deviation {rep.residual:.3g})")

    def coeffs(q):
        return -np.cross(s(q)[:, None], s.jac(q), axis=0)

    P = LinearGaugePotential(s.m, 3, coeffs, None, s.domain, CHART_SCHEME, f"ae[{s.name}]")
    worst = ae_residual(P, s, pts)
    if worst > tol:
        raise InvalidActionError(f"s x A = d s fails (residual {worst:.3g})")
    return P


def ae_residual(P: LinearGaugePotential, s: SectionField, samples) -> float:
    worst = 0.0
    for q in samples:
        lhs = np.cross(s(q)[:, None], P.coeffs(q), axis=0)
        worst = max(worst, float(np.max(np.abs(lhs - s.jac(q)))))
    return worst


def averaged_connection(C0: ConnectionPair, family: SectionFamily, kind: str = "circle", nodes=None,
                        ray_nodes=None) -> ConnectionPair:
    """G-invariant pair from a base pair and sections generating the action.

    The correction is  A_bar_i = -int_G int_0^1 Ad_{exp(t s_a)} nabla0*_i s_a dt dg
    evaluated with the same kernels as the gauge-form averages, and
    nabla = nabla0 - ad*_{A_bar},
    F = F0 + nabla0* A_bar + [A_bar, A_bar].
    """
    if kind == "circle":
        if len(family) != 1:
            raise InvalidActionError("circle averaging uses exactly one section")
        n_nodes = int(nodes or DEFAULT_PERIODIC_NODES)
        t = TWO_PI * np.arange(n_nodes) / n_nodes
        points = t[:, None]
        coeffs = (sawtooth_weights(n_nodes) - np.pi / n_nodes)[:, None]
    elif kind == "so3":
        if len(family) != 3:
            raise InvalidActionError("SO(3) averaging uses three sections")
        K = averaging_kernel("so3", 3, nodes, ray_nodes)
        points, coeffs = K.points, K.coeffs
    else:
        raise InvalidActionError(f"unsupported group kind {kind!r}")

    def _A_bar(q):
        L = C0.algebra(q)
        S = family.at(q)  # (r, n)
        Ad = adjoint_flow_matrix(L, points @ S, np.ones(len(points)))  # (N, n, n)
        N = dual_derivative_sections(C0, family, q)  # (r, n, m)
        V = np.einsum("kr,rai->kai", coeffs, N)
        return np.einsum("kab,kbi->ai", Ad, V)

    A_bar = PointCache(_A_bar)

    def gamma(q):
        return C0.Gamma(q) + _ad_star_stack(C0.lam(q), A_bar(q))

    def F(q):
        q = np.asarray(q, float)
        Ab = A_bar(q)
        dAb = jacobian_fd(A_bar, q, C0.scheme)  # [a, j, i] = d_i Ab_{a j}
        G0 = C0.Gamma(q)
        nab = np.einsum("aji->aij", dAb) + np.einsum("iba,bj->aij", G0, Ab)  # nabla0*_i Ab_j
        comm = np.einsum("bgc,bi,gj->cij", C0.lam(q), Ab, Ab)
        return C0.F(q) + nab - np.swapaxes(nab, 1, 2) + comm

    potential = None
    if C0.has_potential:

        def potential(q):
            return C0.A(q) + A_bar(q)

    return ConnectionPair(C0.m, C0.n, C0.structure_fn, gamma, F, potential, f"avg[{C0.name}]",
                          C0.scheme, C0.constant_structure)


def averaging_correction(C0: ConnectionPair, family: SectionFamily, kind: str = "circle", nodes=None) -> Callable:
    """q -> A_bar(q), the potential added by one averaging pass."""
    C = averaged_connection(C0, family, kind, nodes)
    if not (C.has_potential and C0.has_potential):
        raise ValueError("averaging correction needs chart potentials")
    return lambda q: C.A(q) - C0.A(q)


def generalized_wong_rhs(C: ConnectionPair, g: Metric) -> Callable[[np.ndarray], np.ndarray]:
    """Wong-type equations of (nabla, F) with H = 1/2 g^{ij} p_i p_j."""
    m, n = C.m, C.n

    def rhs(x):
        p, q, y = split_state(x, m, n)
        v = g.inverse(q) @ p
        F = C.F(q)
        p_dot = -0.5 * np.einsum("ijk,j,k->i", g.dinv(q), p, p) - np.einsum("a,aij,j->i", y, F, v)
        y_dot = np.einsum("i,iab,b->a", v, C.Gamma(q), y)
        return np.concatenate([p_dot, v, y_dot])

    return rhs


def induced_poisson_structure(C: ConnectionPair) -> GaugePoissonStructure:
    """Gauge Poisson tensor of the pair: fiber lam(q) y, gauge y^a A_{a i}, F contracted with y."""
    if not C.has_potential:
        raise ValueError("the induced tensor needs a chart potential")
    fiber = PoissonFiber.varying(C.n, C.lam)
    form = GaugeForm(C.m, C.n, lambda q, y: y @ C.A(q), None, lambda q, y: C.A(q).T, name=C.name)

    def F(q, y):
        return np.einsum("a,aij->ij", y, C.F(q))

    return GaugePoissonStructure(fiber, form, F)


def check_structure_field(C: ConnectionPair, samples, tol: float = 1e-12) -> CheckReport:
    """Structure-constant checks of lam(q) at the sampled base points."""
    worst = 0.0
    for q in samples:
        worst = max(worst, check_structure_constants(C.algebra(q), tol).residual)
    return CheckReport("structure-field", worst <= tol, worst, tol, {"samples": len(samples)})
