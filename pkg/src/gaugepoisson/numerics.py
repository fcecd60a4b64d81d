"""Numerical kernels: quadrature, finite differences, small dense linear
algebra and a fixed-step RK4 stepper.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import DimensionError, EvaluationError, IntegrationError

TWO_PI = 2.0 * np.pi

DEFAULT_FD_STEP = 1e-5
DEFAULT_RANK_TOL = 1e-10
DEFAULT_PERIODIC_NODES = 64
DEFAULT_ODE_STEP = 1e-3

_QUADRATURE_KINDS = ("periodic-trapezoid", "gauss-legendre", "product-spherical")


@dataclass(frozen=True)
class QuadratureRule:
    """A one-dimensional (or product) quadrature rule.

    ``node_count`` is an int for the 1-D kinds and a 3-tuple
    ``(radial, polar, azimuthal)`` for ``product-spherical``.
    """

    kind: str = "periodic-trapezoid"
    node_count: int | tuple[int, ...] = DEFAULT_PERIODIC_NODES
    interval: tuple[float, float] = (0.0, TWO_PI)

    def __post_init__(self):
        if self.kind not in _QUADRATURE_KINDS:
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        counts = self.node_count if isinstance(self.node_count, tuple) else (self.node_count,)
        if self.kind == "product-spherical" and len(counts) != 3:
            raise ValueError("product-spherical needs three node counts")
        if any(int(c) != c or c < 2 for c in counts):
            raise ValueError("node counts must be integers >= 2")

    def nodes_weights(self) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.interval
        if self.kind == "periodic-trapezoid":
            n = int(self.node_count)
            h = (b - a) / n
            return a + h * np.arange(n), np.full(n, h)
        if self.kind == "gauss-legendre":
            return gauss_legendre(int(self.node_count), a, b)
        raise ValueError("product-spherical rules are built with ball_rule()")


def periodic_rule(n: int = DEFAULT_PERIODIC_NODES) -> QuadratureRule:
    return QuadratureRule("periodic-trapezoid", n, (0.0, TWO_PI))


def gauss_legendre(n: int, a: float = -1.0, b: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def ball_rule(counts: tuple[int, int, int], radius: float = np.pi):
    """Product rule on the ball |a| < radius in spherical coordinates.

    Returns ``(r, directions, w_r, w_dir)``: Gauss-Legendre radii with their
    plain 1-D weights, unit directions (Gauss-Legendre in cos(polar),
    trapezoid in azimuth) with solid-angle weights summing to 4*pi.  The
    r**2 volume factor is left to the caller so it can cancel singular
    radial densities analytically.
    """
    n_r, n_pol, n_az = counts
    r, w_r = gauss_legendre(n_r, 0.0, radius)
    c, w_c = gauss_legendre(n_pol, -1.0, 1.0)
    phi = TWO_PI * np.arange(n_az) / n_az
    sn = np.sqrt(1.0 - c**2)
    dirs = np.stack(
        [np.outer(sn, np.cos(phi)), np.outer(sn, np.sin(phi)), np.outer(c, np.ones(n_az))],
        axis=-1,
    ).reshape(-1, 3)
    w_dir = np.outer(w_c, np.full(n_az, TWO_PI / n_az)).ravel()
    return r, dirs, w_r, w_dir


def _sample(f, t):
    val = f(t)
    if not np.all(np.isfinite(val)):
        raise EvaluationError(f"non-finite integrand value at node t={t!r}", point=np.atleast_1d(t))
    return val


def integrate_periodic(f: Callable[[float], float], rule: QuadratureRule | None = None) -> float:
    """Periodic trapezoid sum over [0, 2pi).

    Exact for trigonometric polynomials of degree < n/2.
    """
    rule = rule or periodic_rule()
    if rule.kind != "periodic-trapezoid":
        raise ValueError("integrate_periodic needs a periodic-trapezoid rule")
    t, w = rule.nodes_weights()
    return float(sum(wk * _sample(f, tk) for tk, wk in zip(t, w)))


def sawtooth_weights(n: int) -> np.ndarray:
    """Weights w_k with sum_k w_k f(2 pi k / n) = (1/2pi) int_0^{2pi} (t - pi) f(t) dt.

    Obtained by integrating the trigonometric interpolant of f against the
    sawtooth t - pi = -2 sum_j sin(j t)/j, so the rule is exact for
    trigonometric polynomials of degree < n/2.  The plain trapezoid sum is
    only O(1/n^2) accurate here because (t - pi) f(t) is not periodic.
    """
    t = TWO_PI * np.arange(n) / n
    k = np.arange(1, (n - 1) // 2 + 1)
    return -(2.0 / n) * (np.sin(np.outer(t, k)) / k).sum(axis=1)


def integrate_sawtooth(f: Callable[[float], float], rule: QuadratureRule | None = None) -> float:
    rule = rule or periodic_rule()
    if rule.kind != "periodic-trapezoid":
        raise ValueError("integrate_sawtooth needs a periodic-trapezoid rule")
    t, _ = rule.nodes_weights()
    w = sawtooth_weights(len(t))
    return float(sum(wk * _sample(f, tk) for tk, wk in zip(t, w)))


# offsets k and weights c_k of sum_k c_k f(x + k h) / h for f'(x)
_STENCILS = {
    "central-2": ((1, -1), (1 / 2, -1 / 2)),
    "central-4": ((1, -1, 2, -2), (2 / 3, -2 / 3, -1 / 12, 1 / 12)),
    "central-6": ((1, -1, 2, -2, 3, -3), (3 / 4, -3 / 4, -3 / 20, 3 / 20, 1 / 60, -1 / 60)),
}


@dataclass(frozen=True)
class DiffScheme:
    """Central finite differences with a relative step.

    The absolute step along coordinate k is ``step * max(1, |x_k|)``.
    ``central-4`` and ``central-6`` are the five- and seven-point stencils,
    used where a second differentiation must stay accurate.
    """

    scheme: str = "central-2"
    step: float = DEFAULT_FD_STEP

    def __post_init__(self):
        if self.scheme not in _STENCILS:
            raise ValueError(f"unknown difference scheme {self.scheme!r}")
        if not self.step > 0:
            raise ValueError("step must be positive")

    def steps(self, x: np.ndarray) -> np.ndarray:
        return self.step * np.maximum(1.0, np.abs(x))


DEFAULT_SCHEME = DiffScheme()


def _eval_checked(f, x):
    val = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(val)):
        raise EvaluationError("non-finite sample in finite difference", point=x)
    return val


def jacobian_fd(f: Callable, x, scheme: DiffScheme = DEFAULT_SCHEME) -> np.ndarray:
    """Central-difference Jacobian, shape ``f(x).shape + x.shape``."""
    x = np.asarray(x, dtype=float)
    h = scheme.steps(x)
    cols = []
    offsets, weights = _STENCILS[scheme.scheme]
    for k in range(x.size):
        e = np.zeros_like(x)
        e.flat[k] = h.flat[k]
        d = sum(c * _eval_checked(f, x + j * e) for j, c in zip(offsets, weights)) / h.flat[k]
        cols.append(d)
    return np.stack(cols, axis=-1)


def gradient_fd(f: Callable, x, scheme: DiffScheme = DEFAULT_SCHEME) -> np.ndarray:
    return jacobian_fd(lambda z: float(f(z)), x, scheme)


def matrix_rank(M, tol: float = DEFAULT_RANK_TOL) -> int:
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise EvaluationError("non-finite matrix passed to matrix_rank")
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def matrix_exp_action(M, t: float, v) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    v = np.asarray(v, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or v.shape[0] != M.shape[1]:
        raise DimensionError(f"cannot apply exp of {M.shape} matrix to vector of shape {v.shape}")
    return scipy.linalg.expm(t * M) @ v


def rk4_step(rhs: Callable[[np.ndarray], np.ndarray], x, h: float, t: float = 0.0) -> np.ndarray:
    """One classical Runge-Kutta step of the autonomous system x' = rhs(x)."""
    x = np.asarray(x, dtype=float)

    def stage(z):
        k = np.asarray(rhs(z), dtype=float)
        if not np.all(np.isfinite(k)):
            raise IntegrationError("non-finite right-hand side", t=t, state=x)
        return k

    k1 = stage(x)
    k2 = stage(x + 0.5 * h * k1)
    k3 = stage(x + 0.5 * h * k2)
    k4 = stage(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class PointCache:
    """Bounded memo for pure functions of one array argument.

    Finite-difference stencils and RK stages revisit the same base point
    many times; quadrature-defined fields are expensive enough to cache.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], maxsize: int = 512):
        self.fn = fn
        self.maxsize = maxsize
        self._store: OrderedDict[bytes, np.ndarray] = OrderedDict()
        self._lock = threading.Lock()

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        with self._lock:
            hit = self._store.get(key)
        if hit is not None:
            return hit.copy()
        val = np.asarray(self.fn(x), dtype=float)
        with self._lock:
            self._store[key] = val
            if len(self._store) > self.maxsize:
                self._store.popitem(last=False)
        return val.copy()
