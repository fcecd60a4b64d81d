"""Hamiltonian vector fields of gauge Poisson structures, Wong's equations,
fixed-step trajectory integration and post-hoc conservation monitoring.

The equations of motion are x'^b = dH/dx^a M^{ab}, i.e. the bracket with H
in the first slot, so that q' = dH/dp.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import DimensionError, DomainError, DomainExitError, EvaluationError, IntegrationError
from .gauge import GaugePoissonStructure, LinearGaugePotential, PhaseFunction, join_state, split_state
from .lie import LieAlgebraStructure, PoissonFiber
from .numerics import DEFAULT_ODE_STEP, DEFAULT_SCHEME, DiffScheme, jacobian_fd, rk4_step

DOMAIN_EXIT_RADIUS = 1e-6


class Metric:
    """Symmetric, non-degenerate m x m field g_ij(q).

    ``constant`` metrics cache their inverse after the first evaluation;
    otherwise the inverse is recomputed by LU at each q.  ``dinv(q)[i]``
    is d g^{jk}/d q^i, from ``dg_fn`` when given, else finite differences.
    """

    def __init__(self, m: int, g_fn: Callable[[np.ndarray], np.ndarray], constant: bool = False,
                 dg_fn: Callable | None = None, name: str = "", scheme: DiffScheme = DEFAULT_SCHEME):
        self.m = m
        self.g_fn = g_fn
        self.constant = constant
        self.dg_fn = dg_fn
        self.name = name
        self.scheme = scheme
        self._inv = None

    def __call__(self, q) -> np.ndarray:
        g = np.asarray(self.g_fn(np.asarray(q, dtype=float)), dtype=float)
        if g.shape != (self.m, self.m):
            raise DimensionError(f"metric must be {self.m} x {self.m}, got {g.shape}")
        return 0.5 * (g + g.T)

    def inverse(self, q) -> np.ndarray:
        if self.constant and self._inv is not None:
            return self._inv
        g = self(q)
        try:
            lu = np.linalg.inv(g)
        except np.linalg.LinAlgError as exc:
            raise EvaluationError(f"metric is singular at q={np.asarray(q).tolist()}", point=q) from exc
        if not np.all(np.isfinite(lu)) or np.linalg.cond(g) > 1e14:
            raise EvaluationError(f"metric is singular at q={np.asarray(q).tolist()}", point=q)
        inv = 0.5 * (lu + lu.T)
        if self.constant:
            self._inv = inv
        return inv

    def dinv(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.constant:
            return np.zeros((self.m, self.m, self.m))
        if self.dg_fn is not None:
            ginv = self.inverse(q)
            dg = np.asarray(self.dg_fn(q), dtype=float)  # dg[i] = d g / d q^i
            return -np.einsum("jk,ikl,lm->ijm", ginv, dg, ginv)
        return np.moveaxis(jacobian_fd(self.inverse, q, self.scheme), -1, 0)

    @classmethod
    def identity(cls, m: int) -> "Metric":
        return cls(m, lambda q: np.eye(m), constant=True, dg_fn=lambda q: np.zeros((m, m, m)), name="identity")

    @classmethod
    def constant_matrix(cls, g) -> "Metric":
        g = np.asarray(g, dtype=float)
        m = g.shape[0]
        return cls(m, lambda q: g, constant=True, name="constant")


def kinetic_hamiltonian(g: Metric, n: int) -> PhaseFunction:
    """H = 1/2 g^{ij}(q) p_i p_j on T*Q x N with fiber dimension n."""
    m = g.m

    def fn(x):
        p, q, _ = split_state(x, m, n)
        return 0.5 * float(p @ g.inverse(q) @ p)

    def grad(x):
        p, q, _ = split_state(x, m, n)
        dq = 0.5 * np.einsum("ijk,j,k->i", g.dinv(q), p, p)
        return np.concatenate([g.inverse(q) @ p, dq, np.zeros(n)])

    return PhaseFunction(fn, grad, "H")


def hamiltonian_rhs(S: GaugePoissonStructure, H: PhaseFunction) -> Callable[[np.ndarray], np.ndarray]:
    """Explicit component form of the Hamiltonian vector field of H."""
    m, n = S.m, S.n

    def rhs(x):
        _, q, y = split_state(x, m, n)
        dH = H.grad(x)
        Hp, Hq, Hy = dH[:m], dH[m : 2 * m], dH[2 * m :]
        psi = S.fiber.psi(q, y)
        dy = S.gauge.dy(q, y)  # dy[i, a] = dA_i/dy^a
        F = S.F(q, y)
        p_dot = -Hq - dy @ psi @ Hy + F.T @ Hp
        q_dot = Hp
        y_dot = psi.T @ Hy + psi.T @ (dy.T @ Hp)
        return np.concatenate([p_dot, q_dot, y_dot])

    return rhs


def matrix_rhs(S: GaugePoissonStructure, H: PhaseFunction) -> Callable[[np.ndarray], np.ndarray]:
    """The same field through the assembled tensor: x'^b = dH/dx^a M^{ab}."""

    def rhs(x):
        return S.matrix(x).T @ H.grad(x)

    return rhs


def wong_rhs(P: LinearGaugePotential, L: LieAlgebraStructure, g: Metric) -> Callable[[np.ndarray], np.ndarray]:
    """Wong's equations for a particle with internal degree y in the potential P."""
    m, n = P.m, P.n
    if L.n != n:
        raise DimensionError("potential and algebra disagree on the fiber dimension")
    lam = L.lam

    def rhs(x):
        p, q, y = split_state(x, m, n)
        ginv = g.inverse(q)
        A = P.coeffs(q)  # A[b, i]
        d = P.dq(q)  # d[a, i, j] = d_j A_{a i}
        F = (np.swapaxes(d, 1, 2) - d) + np.einsum("bgc,bi,gj->cij", lam, A, A)
        v = ginv @ p
        p_dot = -0.5 * np.einsum("ijk,j,k->i", g.dinv(q), p, p) - np.einsum("a,aij,j->i", y, F, v)
        y_dot = -np.einsum("c,abc,bi,i->a", y, lam, A, v)
        return np.concatenate([p_dot, v, y_dot])

    return rhs


def induced_structure(P: LinearGaugePotential, L: LieAlgebraStructure, casimirs=None) -> GaugePoissonStructure:
    """Gauge Poisson structure of y^a A_{a i}(q) dq^i on T*Q x h*."""
    return GaugePoissonStructure(PoissonFiber.lie_poisson(L, casimirs), P.gauge_form())


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise DimensionError("times and states must have equal length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def radial_domain(m: int, radius: float = DOMAIN_EXIT_RADIUS) -> Callable[[np.ndarray], bool]:
    """Domain test |q| >= radius for fields singular at q = 0."""

    def inside(x):
        return bool(np.linalg.norm(x[m : 2 * m]) >= radius)

    return inside


def integrate(rhs: Callable[[np.ndarray], np.ndarray], x0, t_end: float, h: float = DEFAULT_ODE_STEP,
              domain: Callable[[np.ndarray], bool] | None = None, metadata: dict | None = None) -> Trajectory:
    """Classical RK4 with a fixed step, storing every step.

    The step count is round(t_end / h) and sample k sits at t = k h.
    Leaving ``domain`` or hitting a DomainError inside the right-hand side
    raises DomainExitError carrying the last valid time and state.
    """
    if not h > 0:
        raise ValueError("step must be positive")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    x = np.asarray(x0, dtype=float).copy()
    if domain is not None and not domain(x):
        raise DomainExitError("initial state lies outside the domain", t=0.0, state=x)
    steps = int(round(t_end / h))
    states = np.empty((steps + 1, x.size))
    states[0] = x
    for k in range(steps):
        t = k * h
        try:
            x_new = rk4_step(rhs, x, h, t)
        except DomainError as exc:
            raise DomainExitError(f"trajectory left the domain after t={t:.17g}: {exc}", t=t, state=x) from exc
        except EvaluationError as exc:
            raise IntegrationError(f"right-hand side failed after t={t:.17g}: {exc}", t=t, state=x) from exc
        if not np.all(np.isfinite(x_new)):
            raise IntegrationError(f"non-finite state after t={t:.17g}", t=t, state=x)
        if domain is not None and not domain(x_new):
            raise DomainExitError(f"trajectory left the domain after t={t:.17g}", t=t, state=x)
        x = x_new
        states[k + 1] = x
    meta = {"method": "rk4", "step": h, "t_end": t_end}
    meta.update(metadata or {})
    return Trajectory(h * np.arange(steps + 1), states, meta)


@dataclass(frozen=True)
class ConservationEntry:
    initial: float
    max_abs_drift: float
    max_rel_drift: float

    def to_dict(self) -> dict:
        return {"initial": self.initial, "max_abs_drift": self.max_abs_drift, "max_rel_drift": self.max_rel_drift}


@dataclass
class ConservationReport:
    entries: dict[str, ConservationEntry]

    def to_dict(self) -> dict:
        return {k: v.to_dict() for k, v in self.entries.items()}


def monitor(traj: Trajectory, functions: Mapping[str, Callable[[np.ndarray], float]]) -> ConservationReport:
    """Drift of each function over the stored states.

    The relative drift divides by |f(x_0)|; when f(x_0) = 0 it equals the
    absolute drift.
    """
    entries = {}
    for name, f in functions.items():
        vals = np.array([float(f(x)) for x in traj.states])
        f0 = vals[0]
        abs_drift = float(np.max(np.abs(vals - f0)))
        rel = abs_drift / abs(f0) if f0 != 0.0 else abs_drift
        entries[name] = ConservationEntry(float(f0), abs_drift, float(rel))
    return ConservationReport(entries)


def energy_order(rhs, H: Callable, x0, t_end: float, h: float) -> float:
    """Observed convergence order of the energy error under step halving."""
    e1 = monitor(integrate(rhs, x0, t_end, h), {"H": H}).entries["H"].max_abs_drift
    e2 = monitor(integrate(rhs, x0, t_end, h / 2), {"H": H}).entries["H"].max_abs_drift
    return float(np.log2(e1 / e2))
