"""Constants entering the spherical inequality and the monotonicity test.

Lambda_b is the largest constant in the spherical inequality; every route
here produces a lower bound for it.  A route either evaluates 2 c_K / C_P
from a pair of constants, or transfers a known bound through a kernel
comparison (see compare.py).  Reported bounds have their quadrature error
subtracted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .kernels import momentum_transfer
from .numerics import DomainError, QuadResult, QuadratureSpec, integrate

ENDPOINT_QUADRATURE = QuadratureSpec("adaptive-endpoint", order=16, rel_tol=1e-12,
                                     abs_tol=1e-15, max_refinements=14)


def lambda_local(d: int) -> Fraction:
    """d + 3 - 1/(d - 1), the curvature constant of the projective space."""
    if d < 2:
        raise DomainError("d must be >= 2")
    return Fraction(d + 3) - Fraction(1, d - 1)


def _kernel_dim(kernel, d):
    return kernel.d if d is None else int(d)


def cK_curvature(kernel, d: Optional[int] = None, with_error: bool = False):
    """((d-2)/(2(d-1))) times the momentum transfer; only valid for d >= 3."""
    d = _kernel_dim(kernel, d)
    if d < 3:
        raise DomainError("the curvature bound needs d >= 3")
    factor = (d - 2) / (2 * (d - 1))
    mt, err = momentum_transfer(kernel, with_error=True)
    return (factor * mt, factor * err) if with_error else factor * mt


def cP_general(kernel, d: Optional[int] = None, route: str = "momentum-integral",
               with_error: bool = False):
    """Poincare-type constant C_P, by the momentum transfer or by 2 lambda_tilde_2 / lambda_2."""
    d = _kernel_dim(kernel, d)
    if route == "momentum-integral":
        mt, err = momentum_transfer(kernel, with_error=True)
        val, err = mt / (d - 1), err / (d - 1)
    elif route == "spectral":
        from .spectral import b_eigenvalue

        lt, err = b_eigenvalue(kernel, 2, d, with_error=True)
        val, err = 2 * lt / (2 * d), 2 * err / (2 * d)
    else:
        raise ValueError(f"unknown C_P route {route!r}")
    return (val, err) if with_error else val


def _weight_integral(weight, rate, t_split=1.0, t_max=40.0):
    """int omega(t) (1 - e^{-rate t}) dt, split at t_split and t_max.

    On (0, t_split] the integrand behaves like t^{-s}; the substitution
    t = t_split u^{1/(1-s)} is applied analytically so that nothing
    overflows even for s close to 1; beyond t_max the non-decaying weight terms are
    integrated in closed form and the discarded e^{-rate t} part is bounded
    and added to the error.
    """
    def f(t):
        return weight(t) * -np.expm1(-rate * t)

    if not weight.closed_form:
        return integrate(f, weight.support, ENDPOINT_QUADRATURE)
    m = 1.0 / (1.0 - weight.s)

    def head_integrand(u):
        # t = t_split u^m turns t^{-1-s} (1 - e^{-rate t}) dt into a bounded integrand
        t = t_split * u ** m
        safe = np.where(t > 0, t, 1.0)
        slope = np.where(t > 0, -np.expm1(-rate * safe) / safe, rate)
        terms = sum(a * np.exp(-mu * t) for a, mu in weight.terms)
        return m * t_split ** (1.0 - weight.s) * terms * slope

    head = integrate(head_integrand, (0.0, 1.0), ENDPOINT_QUADRATURE)
    body = integrate(f, (t_split, t_max), ENDPOINT_QUADRATURE)
    lead = sum(a for a, mu in weight.terms if mu == 0)
    tail = weight.tail_mass(t_max)
    dropped = abs(lead) * t_max ** (-1 - weight.s) * math.exp(-rate * t_max) / rate
    return QuadResult(head.value + body.value + tail, head.error + body.error + dropped,
                      head.evaluations + body.evaluations)


def cK_subordinate(weight, d: int, with_error: bool = False):
    """(1/2) int omega(t) (1 - exp(-2 Lambda_local t)) dt."""
    res = _weight_integral(weight, 2 * float(lambda_local(d)))
    return (0.5 * res.value, 0.5 * res.error) if with_error else 0.5 * res.value


def cP_subordinate(weight, d: int, with_error: bool = False):
    """int omega(t) (1 - exp(-2 d t)) dt / d."""
    res = _weight_integral(weight, 2.0 * d)
    return (res.value / d, res.error / d) if with_error else res.value / d


def lambda_assemble(c_K: float, C_P: float) -> float:
    if not C_P > 0:
        raise ValueError("C_P must be positive")
    return 2.0 * c_K / C_P


def _assemble_with_error(cK, cK_err, cP, cP_err):
    lam = lambda_assemble(cK, cP)
    return lam, lam * (cK_err / abs(cK) + cP_err / abs(cP))


def lambda_subordinate(weight, d: int, with_error: bool = False):
    cK, eK = cK_subordinate(weight, d, with_error=True)
    cP, eP = cP_subordinate(weight, d, with_error=True)
    lam, err = _assemble_with_error(cK, eK, cP, eP)
    return (lam, err) if with_error else lam


def lambda_curvature(kernel, d: Optional[int] = None, with_error: bool = False):
    """2 c_K / C_P with both constants from the momentum transfer; equals d - 2."""
    d = _kernel_dim(kernel, d)
    cK, eK = cK_curvature(kernel, d, with_error=True)
    cP, eP = cP_general(kernel, d, with_error=True)
    lam, err = _assemble_with_error(cK, eK, cP, eP)
    return (lam, err) if with_error else lam


def lambda_hard_sphere(d: int) -> int:
    """Lambda_b = d for the constant kernel."""
    if d < 2:
        raise DomainError("d must be >= 2")
    return d


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RouteValue:
    route: str
    value: float
    error: float = 0.0

    @property
    def lower(self):
        """The value with its error bar removed, as certified."""
        return self.value - self.error


def best_lambda(routes):
    """The strongest certificate: largest value - error over the given routes."""
    routes = [r for r in routes if r is not None]
    if not routes:
        raise ValueError("no lambda route available")
    return max(routes, key=lambda r: r.lower)


@dataclass(frozen=True)
class MonotonicityVerdict:
    gamma: float
    lambda_lower: float
    threshold: float
    margin: float
    passed: bool

    def to_dict(self):
        return {"gamma": self.gamma, "lambda_lower": self.lambda_lower,
                "threshold": self.threshold, "margin": self.margin, "pass": self.passed}


def monotonicity_verdict(gamma, lambda_lower) -> MonotonicityVerdict:
    """Pass iff |gamma| <= 2 sqrt(lambda_lower)."""
    if lambda_lower < 0:
        raise ValueError("lambda_lower must be >= 0")
    g = float(gamma)
    threshold = 2.0 * math.sqrt(lambda_lower)
    return MonotonicityVerdict(g, float(lambda_lower), threshold, threshold - abs(g),
                               abs(g) <= threshold)


@dataclass
class ConstantsReport:
    kernel: str
    d: int
    c_K: Optional[RouteValue] = None
    C_P: Optional[RouteValue] = None
    lambda_routes: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def best(self) -> RouteValue:
        return best_lambda(self.lambda_routes)

    def to_dict(self):
        def rv(r):
            return None if r is None else {"route": r.route, "value": r.value, "error": r.error}

        best = self.best if self.lambda_routes else None
        return {"kernel": self.kernel, "d": self.d, "c_K": rv(self.c_K), "C_P": rv(self.C_P),
                "lambda_routes": [rv(r) for r in self.lambda_routes],
                "lambda_best": rv(best),
                "lambda_certified": None if best is None else best.lower,
                "diagnostics": self.diagnostics}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def subordinate_report(weight, d: int, kernel_id: Optional[str] = None) -> ConstantsReport:
    cK, eK = cK_subordinate(weight, d, with_error=True)
    cP, eP = cP_subordinate(weight, d, with_error=True)
    lam, err = _assemble_with_error(cK, eK, cP, eP)
    rep = ConstantsReport(kernel_id or f"subordinate:{weight.form}", d,
                          RouteValue("subordinate", cK, eK), RouteValue("subordinate", cP, eP))
    rep.lambda_routes.append(RouteValue("subordinate", lam, err))
    return rep


def kernel_report(kernel, kernel_id: Optional[str] = None) -> ConstantsReport:
    """Curvature and hard-sphere routes for a kernel given only by its values."""
    d = kernel.d
    rep = ConstantsReport(kernel_id or kernel.family, d)
    cP, eP = cP_general(kernel, with_error=True)
    rep.C_P = RouteValue("momentum-integral", cP, eP)
    if d >= 3:
        cK, eK = cK_curvature(kernel, with_error=True)
        rep.c_K = RouteValue("curvature", cK, eK)
        rep.lambda_routes.append(RouteValue("curvature", *_assemble_with_error(cK, eK, cP, eP)))
    if kernel.family == "constant" or (kernel.family == "hard-sphere" and d == 3):
        rep.lambda_routes.append(RouteValue("hard-sphere", float(lambda_hard_sphere(d))))
    return rep
