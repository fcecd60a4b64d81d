"""Built-in fields with analytic partials: the monopole potential on R^3 minus
the origin, unit sections used by the averaging scenarios, and a generic
smooth so(3) potential for Jacobi tests.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .gauge import GaugeForm, LinearGaugePotential
from .lie import FiberField
from .symmetry import SectionField

DOMAIN_EPS = 1e-9

_EPS = np.zeros((3, 3, 3))
for _a, _b, _c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _EPS[_a, _b, _c] = 1.0
    _EPS[_b, _a, _c] = -1.0
LEVI_CIVITA = _EPS
_I3 = np.eye(3)


def hat(v) -> np.ndarray:
    """Matrix with hat(v) @ w = v x w."""
    v = np.asarray(v, dtype=float)
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def punctured_domain(q, eps: float = DOMAIN_EPS):
    r = np.sqrt(q @ q)
    if not r >= eps:
        raise DomainError(f"|q| = {r:.3g} < {eps:g}: monopole fields are singular at the origin", point=q)


def radial_section() -> SectionField:
    """s(q) = q/|q| with Jacobian (I - s s^T)/|q|."""

    def fn(q):
        return q / np.sqrt(q @ q)

    def jac(q):
        r = np.sqrt(q @ q)
        s = q / r
        return (_I3 - np.outer(s, s)) / r

    return SectionField(3, 3, fn, jac, punctured_domain, "q/|q|")


def planar_section() -> SectionField:
    """s(q) = (cos q1, sin q1, 0)."""

    def fn(q):
        return np.array([np.cos(q[0]), np.sin(q[0]), 0.0])

    def jac(q):
        J = np.zeros((3, 3))
        J[:, 0] = [-np.sin(q[0]), np.cos(q[0]), 0.0]
        return J

    return SectionField(3, 3, fn, jac, None, "(cos q1, sin q1, 0)")


def spherical_section() -> SectionField:
    """s(q) = (sin q1 cos q2, sin q1 sin q2, cos q1)."""

    def fn(q):
        a, b = q[0], q[1]
        return np.array([np.sin(a) * np.cos(b), np.sin(a) * np.sin(b), np.cos(a)])

    def jac(q):
        a, b = q[0], q[1]
        J = np.zeros((3, 3))
        J[:, 0] = [np.cos(a) * np.cos(b), np.cos(a) * np.sin(b), -np.sin(a)]
        J[:, 1] = [-np.sin(a) * np.sin(b), np.sin(a) * np.cos(b), 0.0]
        return J

    return SectionField(3, 3, fn, jac, None, "spherical(q1, q2)")


def section_frame(s: SectionField, helper=(0.3, -0.5, 0.8)) -> tuple[SectionField, SectionField, SectionField]:
    """Right-handed orthonormal frame (u, v, s) built from a unit section.

    The helper direction must stay away from s on the region of interest.
    Jacobians are left to finite differences.
    """
    helper = np.asarray(helper, dtype=float)

    def u(q):
        w = np.cross(helper, s(q))
        return w / np.linalg.norm(w)

    def v(q):
        return np.cross(s(q), u(q))

    return (
        SectionField(3, s.m, u, None, s.domain, f"u[{s.name}]"),
        SectionField(3, s.m, v, None, s.domain, f"v[{s.name}]"),
        s,
    )


def wu_yang_gauge_form() -> GaugeForm:
    """A_i(q, y) = (q x y)_i / |q|^2 with exact partials."""

    def value(q, y):
        return np.cross(q, y) / (q @ q)

    def dq(q, y):
        r2 = q @ q
        return hat(y).T / r2 - 2.0 * np.outer(np.cross(q, y), q) / r2**2

    def dy(q, y):
        return hat(q) / (q @ q)

    return GaugeForm(3, 3, value, dq, dy, punctured_domain, name="wu-yang")


def wu_yang_potential() -> LinearGaugePotential:
    """Algebra-valued form with y^a A_{a i}(q) = (q x y)_i / |q|^2."""

    def coeffs(q):
        return hat(q).T / (q @ q)

    def dq(q):
        r2 = q @ q
        # d_j A_{a i} = eps_{i j a}/|q|^2 - 2 q_j (q x e_a)_i/|q|^4
        first = np.einsum("ija->aij", _EPS) / r2
        second = -2.0 * np.einsum("ia,j->aij", hat(q), q) / r2**2
        return first + second

    return LinearGaugePotential(3, 3, coeffs, dq, punctured_domain, name="wu-yang")


def wu_yang_momentum() -> FiberField:
    """J(q, y) = <q/|q|, y>."""
    s = radial_section()

    def fn(q, y):
        punctured_domain(q)
        return float(s(q) @ y)

    return FiberField(fn, lambda q, y: s.jac(q).T @ y, lambda q, y: s(q), "<q/|q|,y>")


def wu_yang_field_strength_closed(q, y) -> np.ndarray:
    """F_ij = -eps_{ijk} q^k (q.y)/|q|^4 for the contracted monopole form."""
    q = np.asarray(q, dtype=float)
    punctured_domain(q)
    return -np.einsum("ijk,k->ij", _EPS, q) * (q @ np.asarray(y, float)) / (q @ q) ** 2


def generic_so3_potential(seed: int = 7) -> LinearGaugePotential:
    """Smooth non-symmetric potential A_{a i}(q) = C0 + C1 q + C2 sin(q)."""
    rng = np.random.default_rng(seed)
    C0 = rng.normal(size=(3, 3))
    C1 = rng.normal(size=(3, 3, 3))
    C2 = rng.normal(size=(3, 3, 3))

    def coeffs(q):
        return C0 + C1 @ q + C2 @ np.sin(q)

    def dq(q):
        return C1 + C2 * np.cos(q)[None, None, :]

    return LinearGaugePotential(3, 3, coeffs, dq, name=f"generic-so3[{seed}]")
