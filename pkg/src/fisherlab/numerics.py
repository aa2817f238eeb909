"""Special functions and quadrature engines shared by the other modules.

Legendre polynomials here are the zonal harmonics of S^{d-1}, normalized so
that P_l(1) = 1.  For d = 2 they are the Chebyshev polynomials cos(l arccos x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln

_DOMAIN_SLACK = 1e-12


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class NonConvergenceError(RuntimeError):
    """Refinement budget exhausted before the tolerance was met."""

    def __init__(self, message, last_values=None):
        super().__init__(message)
        self.last_values = last_values


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------

def surface_area(p):
    """Area of the unit p-sphere S^p sitting in R^{p+1}."""
    if p < 0:
        raise DomainError("sphere dimension must be >= 0")
    return 2.0 * math.pi ** ((p + 1) / 2) / math.gamma((p + 1) / 2)


def weight_moment(p):
    """Integral of (1 - s^2)^{(p-2)/2} over [-1, 1], i.e. sqrt(pi) G(p/2) / G((p+1)/2)."""
    if p <= 0:
        raise DomainError("exponent parameter must be positive")
    return math.sqrt(math.pi) * math.exp(gammaln(p / 2) - gammaln((p + 1) / 2))


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1 + _DOMAIN_SLACK):
        raise DomainError("Legendre argument outside [-1, 1]")
    return np.clip(x, -1.0, 1.0)


def _recurrence_coefficients(d, lmax):
    # P_{l+1} = a_l x P_l - b_l P_{l-1}, with P_0 = 1 and P_1 = x
    ell = np.arange(lmax + 1, dtype=float)
    denom = ell + d - 2
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(denom > 0, (2 * ell + d - 2) / denom, 1.0)
        b = np.where(denom > 0, ell / denom, 0.0)
    return a, b


def legendre_P(ell, d, x):
    """d-dimensional Legendre polynomial of degree ell with P_ell(1) = 1."""
    if ell < 0 or d < 2:
        raise DomainError("need ell >= 0 and d >= 2")
    x = _check_x(x)
    if d == 2:
        return np.cos(ell * np.arccos(x))
    return legendre_table(ell, d, x)[ell]


def legendre_table(lmax, d, x):
    """Values P_0..P_lmax at x, stacked along a new leading axis."""
    x = _check_x(x)
    a, b = _recurrence_coefficients(d, lmax)
    out = np.empty((lmax + 1,) + x.shape)
    out[0] = 1.0
    if lmax >= 1:
        out[1] = x
    for ell in range(1, lmax):
        out[ell + 1] = a[ell] * x * out[ell] - b[ell] * out[ell - 1]
    return out


def legendre_defect_table(lmax, d, theta):
    """Values 1 - P_ell(cos theta) for ell = 0..lmax, accurate as theta -> 0.

    Uses the recurrence for Q_ell = 1 - P_ell written in u = 1 - cos theta,
    Q_{l+1} = a_l u P_l + a_l Q_l - b_l Q_{l-1}, which relies on a_l - b_l = 1
    and never forms 1 - (something close to 1).
    """
    theta = np.asarray(theta, dtype=float)
    if d == 2:
        ell = np.arange(lmax + 1).reshape((-1,) + (1,) * theta.ndim)
        return 2.0 * np.sin(ell * theta / 2) ** 2
    u = 2.0 * np.sin(theta / 2) ** 2
    a, b = _recurrence_coefficients(d, lmax)
    P = np.empty((lmax + 1,) + theta.shape)
    Q = np.empty_like(P)
    P[0], Q[0] = 1.0, 0.0
    if lmax >= 1:
        P[1], Q[1] = 1.0 - u, u
    for ell in range(1, lmax):
        Q[ell + 1] = a[ell] * u * P[ell] + a[ell] * Q[ell] - b[ell] * Q[ell - 1]
        P[ell + 1] = 1.0 - Q[ell + 1]
    return Q


@dataclass(frozen=True)
class PolynomialBasisCache:
    """Recurrence coefficients for P_0..P_lmax in dimension d.

    The cache is immutable; evaluation allocates its own output, so one cache
    can be shared freely between threads.
    """

    d: int
    lmax: int
    a: np.ndarray = field(init=False, repr=False)
    b: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.d < 2 or self.lmax < 0:
            raise DomainError("need d >= 2 and lmax >= 0")
        a, b = _recurrence_coefficients(self.d, self.lmax)
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def __call__(self, x):
        x = _check_x(x)
        out = np.empty((self.lmax + 1,) + x.shape)
        out[0] = 1.0
        if self.lmax >= 1:
            out[1] = x
        for ell in range(1, self.lmax):
            out[ell + 1] = self.a[ell] * x * out[ell] - self.b[ell] * out[ell - 1]
        return out


# ---------------------------------------------------------------------------
# Quadrature rules
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _gauss(n):
    x, w = leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n, a=-1.0, b=1.0):
    """Nodes and weights of the n-point Gauss-Legendre rule on [a, b]."""
    x, w = _gauss(int(n))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def composite_gauss(edges, order=16):
    """Gauss rule of the given order on every panel [edges[i], edges[i+1]]."""
    edges = np.asarray(edges, dtype=float)
    x, w = _gauss(int(order))
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = lo + half * (x[None, :] + 1.0)
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


def graded_edges(a, b, smallest, ratio=0.5):
    """Panel edges on [a, b] shrinking geometrically towards a, down to `smallest`."""
    length = b - a
    levels = max(1, int(math.ceil(math.log(smallest / length) / math.log(ratio))))
    offsets = length * ratio ** np.arange(levels, -1, -1, dtype=float)
    return np.concatenate(([a], a + offsets))


# ---------------------------------------------------------------------------
# integrate()
# ---------------------------------------------------------------------------

SCHEMES = ("fixed-gauss", "adaptive-endpoint", "log-semiinfinite")


@dataclass(frozen=True)
class QuadratureSpec:
    scheme: str = "adaptive-endpoint"
    order: int = 16
    rel_tol: float = 1e-10
    abs_tol: float = 1e-13
    max_refinements: int = 12

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown quadrature scheme {self.scheme!r}")
        if self.order < 2:
            raise ValueError("order must be >= 2")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.abs_tol < 0:
            raise ValueError("abs_tol must be >= 0")
        if self.max_refinements < 0:
            raise ValueError("max_refinements must be >= 0")


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    evaluations: int

    def __iter__(self):
        yield self.value
        yield self.error


def _converged(new, old, spec):
    return abs(new - old) <= max(spec.rel_tol * abs(new), spec.abs_tol)


def _power_map(f, a, b, left, right):
    """Rewrite f on [a, b] as an integrand on [0, 1] with endpoint powers removed.

    An endpoint behaving like |x - e|^beta (beta > -1) is smoothed by the
    substitution x - e = L u^m with m = 1/(1 + beta), which turns the
    singular factor into a constant times u^0.
    """
    if left is None and right is None:
        return lambda u: f(a + (b - a) * u) * (b - a)
    if left is not None and right is not None:
        mid = 0.5 * (a + b)
        g1 = _power_map(f, a, mid, left, None)
        g2 = _power_map(f, mid, b, None, right)
        return lambda u: np.concatenate((g1(u), g2(u))).reshape(2, -1).sum(axis=0)
    beta = left if left is not None else right
    if beta <= -1:
        raise ValueError("endpoint exponent must exceed -1 for an integrable singularity")
    m = max(1.0, 1.0 / (1.0 + beta))
    L = b - a
    if left is not None:
        return lambda u: f(a + L * u ** m) * L * m * u ** (m - 1)
    return lambda u: f(b - L * u ** m) * L * m * u ** (m - 1)


def _composite_unit(g, panels, order):
    x, w = composite_gauss(np.linspace(0.0, 1.0, panels + 1), order)
    return float(np.sum(g(x) * w)), x.size


def integrate(f: Callable, domain, spec: QuadratureSpec = QuadratureSpec(),
              left: Optional[float] = None, right: Optional[float] = None) -> QuadResult:
    """Integrate a vectorized f over domain = (a, b).

    `left`/`right` declare endpoint singularity exponents for the
    adaptive-endpoint scheme.  For the log-semiinfinite scheme b must be
    inf and a >= 0.  The error is the difference between the last two
    refinement levels.
    """
    a, b = float(domain[0]), float(domain[1])
    if spec.scheme == "log-semiinfinite":
        return _integrate_semiinfinite(f, a, spec)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("finite domain required for this scheme")
    if spec.scheme == "fixed-gauss":
        g = _power_map(f, a, b, None, None)
        v1, n1 = _composite_unit(g, 1, spec.order)
        v2, n2 = _composite_unit(g, 1, 2 * spec.order)
        return QuadResult(v2, abs(v2 - v1), n1 + n2)
    g = _power_map(f, a, b, left, right)
    old, count = _composite_unit(g, 1, spec.order)
    history = [old]
    for k in range(1, spec.max_refinements + 1):
        new, n = _composite_unit(g, 2 ** k, spec.order)
        count += n
        history.append(new)
        if _converged(new, old, spec):
            return QuadResult(new, abs(new - old), count)
        old = new
    raise NonConvergenceError("adaptive-endpoint quadrature did not converge", history[-2:])


def _integrate_semiinfinite(f, a, spec):
    # t = a + exp(tau); unit-width panels, range widened and panels halved per level
    def g(tau):
        e = np.exp(tau)
        return f(a + e) * e

    lo, hi, width = -20.0, 20.0, 1.0
    count = 0

    def run(lo, hi, width):
        n = int(math.ceil((hi - lo) / width))
        x, w = composite_gauss(np.linspace(lo, hi, n + 1), spec.order)
        with np.errstate(over="ignore", under="ignore"):
            return float(np.sum(g(x) * w)), x.size

    old, n = run(lo, hi, width)
    count += n
    history = [old]
    for _ in range(spec.max_refinements):
        lo, hi, width = lo - 20.0, hi + 20.0, width / 2
        new, n = run(lo, hi, width)
        count += n
        history.append(new)
        if _converged(new, old, spec):
            return QuadResult(new, abs(new - old), count)
        old = new
    raise NonConvergenceError("semi-infinite quadrature did not converge", history[-2:])
