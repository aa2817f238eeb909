"""Spectral side of the collision operator on S^{d-1}.

Zonal kernels act diagonally on spherical harmonics: order-ell harmonics are
multiplied by -lambda_tilde_ell.  This module computes those multipliers,
the heat kernel h_t, kernels subordinated to the heat flow,
b(c) = int_0^inf h_t(c) omega(t) dt, and recovers kernel values from
multipliers alone.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Optional

import numpy as np
from scipy.special import gamma as gamma_fn, gammaln

from .kernels import AngularKernel, _angular_integral
from .numerics import (NonConvergenceError, composite_gauss, gauss_legendre, legendre_defect_table,
                       legendre_table, surface_area)

HEAT_TRUNCATION_TOL = 1e-12
T_MAX = 40.0
SUBORDINATE_THETA_MIN = 1e-2


def laplace_eigenvalue(ell: int, d: int) -> int:
    """lambda_ell = ell (ell + d - 2), exact."""
    if ell < 0 or d < 2:
        raise ValueError("need ell >= 0 and d >= 2")
    return ell * (ell + d - 2)


def harmonic_multiplicity(ell: int, d: int) -> int:
    """Dimension of the space of degree-ell spherical harmonics on S^{d-1}."""
    if ell < 0 or d < 2:
        raise ValueError("need ell >= 0 and d >= 2")
    if ell == 0:
        return 1
    if d == 2:
        return 2
    return comb(ell + d - 1, d - 1) - comb(ell + d - 3, d - 1)


def _eigen_arrays(lmax, d):
    ell = np.arange(lmax + 1)
    lam = ell * (ell + d - 2.0)
    mult = np.array([harmonic_multiplicity(int(k), d) for k in ell], dtype=float)
    return lam, mult


# ---------------------------------------------------------------------------
# Multipliers of a kernel
# ---------------------------------------------------------------------------

def b_eigenvalue(kernel, ell: int, d: Optional[int] = None, with_error: bool = False):
    """lambda_tilde_ell = omega_{d-2} int_0^pi (1 - P_ell(cos t)) b(t) sin^{d-2} t dt."""
    d = kernel.d if d is None else d
    if ell == 0:
        return (0.0, 0.0) if with_error else 0.0
    nu = getattr(kernel, "nu", None)
    singular = nu is not None and nu > 0
    if singular and nu >= d + 1:
        raise NonConvergenceError(f"kernel exponent nu={nu} >= d+1: multipliers are infinite")

    def weight(theta):
        return legendre_defect_table(ell, d, theta)[ell] * np.sin(theta) ** (d - 2)

    val, err = _angular_integral(kernel, weight, d - nu if singular else None)
    area = surface_area(d - 2)
    return (area * val, area * err) if with_error else area * val


@dataclass(frozen=True)
class SpectralData:
    """lambda_ell, lambda_tilde_ell and multiplicities for ell = 0..lmax."""

    d: int
    lmax: int
    lam: np.ndarray
    lambda_tilde: np.ndarray
    mult: np.ndarray

    def __post_init__(self):
        for name in ("lam", "lambda_tilde", "mult"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (self.lmax + 1,):
                raise ValueError(f"{name} must have length lmax + 1")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.lambda_tilde[0] != 0 or np.any(self.lambda_tilde < -1e-12):
            raise ValueError("lambda_tilde must vanish at ell = 0 and be nonnegative")

    @classmethod
    def from_multipliers(cls, d, multipliers):
        mult_arr = np.asarray(multipliers, dtype=float)
        lmax = mult_arr.size - 1
        lam, mult = _eigen_arrays(lmax, d)
        return cls(d, lmax, lam, mult_arr, mult)

    @classmethod
    def from_kernel(cls, kernel, lmax):
        lt = [b_eigenvalue(kernel, ell) for ell in range(lmax + 1)]
        return cls.from_multipliers(kernel.d, lt)

    @classmethod
    def from_weight(cls, weight: "WeightFunction", d, lmax):
        lam, _ = _eigen_arrays(lmax, d)
        return cls.from_multipliers(d, weight.transform(lam))

    @classmethod
    def heat(cls, t, d, lmax):
        lam, _ = _eigen_arrays(lmax, d)
        return cls.from_multipliers(d, -np.expm1(-lam * t))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["ell", "lambda", "lambda_tilde", "mult"])
        for k in range(self.lmax + 1):
            writer.writerow([k, int(self.lam[k]), repr(float(self.lambda_tilde[k])),
                             int(self.mult[k])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, d):
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        body = rows[1:]
        return cls.from_multipliers(d, [float(r[2]) for r in body])


# ---------------------------------------------------------------------------
# Heat kernel
# ---------------------------------------------------------------------------

def default_heat_lmax(t):
    return int(math.ceil(8.0 / math.sqrt(t)))


def _heat_tail(t, d, lmax):
    # sum_{ell > lmax} N_ell e^{-lambda_ell t}, a bound since |P_ell| <= 1
    total = 0.0
    ell = lmax + 1
    while True:
        term = harmonic_multiplicity(ell, d) * math.exp(-laplace_eigenvalue(ell, d) * t)
        total += term
        if term < 1e-30 * max(total, 1e-300) or term == 0.0:
            return total
        ell += 1


def heat_kernel(t: float, c, d: int, lmax: Optional[int] = None,
                tol: float = HEAT_TRUNCATION_TOL):
    """h_t(c) by the addition-theorem series; returns (value, truncation bound).

    The bound is sum_{ell > lmax} N_ell e^{-lambda_ell t} / omega_{d-1}.  A
    NonConvergenceError is raised when it exceeds tol.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    lmax = default_heat_lmax(t) if lmax is None else int(lmax)
    area = surface_area(d - 1)
    err = _heat_tail(t, d, lmax) / area
    if err > tol:
        raise NonConvergenceError(f"lmax={lmax} too small for t={t}: truncation bound {err:.3g}")
    lam, mult = _eigen_arrays(lmax, d)
    coef = mult * np.exp(-lam * t) / area
    P = legendre_table(lmax, d, c)
    value = np.tensordot(coef, P, axes=1)
    return value, err


class HeatKernel(AngularKernel):
    """Kernel b = h_t; its multipliers are 1 - exp(-lambda_ell t)."""

    family = "heat"

    def __init__(self, t, d, lmax=None):
        super().__init__(d, params={"t": t})
        self.t = float(t)
        self.lmax = default_heat_lmax(t) if lmax is None else int(lmax)
        # fail early if the truncation is too coarse
        heat_kernel(self.t, 1.0, d, self.lmax)

    def _evaluate(self, theta):
        return heat_kernel(self.t, np.cos(theta), self.d, self.lmax)[0]


# ---------------------------------------------------------------------------
# Subordination weights
# ---------------------------------------------------------------------------

def fractional_constant(s):
    """C_s = int_0^inf (1 - e^{-t}) t^{-1-s} dt = -Gamma(-s)."""
    return -gamma_fn(-s)


@dataclass(frozen=True)
class WeightFunction:
    """omega(t) = t^{-1-s} sum_k a_k e^{-mu_k t}, or a custom callable.

    The exponential-sum form covers the fractional weight t^{-1-s}/C_s and
    both published guesses; it admits the closed-form transform
    int omega(t) (1 - e^{-lambda t}) dt = C_s sum_k a_k ((mu_k + lambda)^s - mu_k^s).
    Custom weights carry a callable and a finite support.
    """

    form: str
    s: Optional[float] = None
    terms: tuple = ()
    func: Optional[Callable] = field(default=None, compare=False, repr=False)
    support: Optional[tuple] = None
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.form != "custom":
            if self.s is None or not 0 < self.s < 1:
                raise ValueError("s must lie in (0, 1)")
            if not self.terms:
                raise ValueError("weight needs at least one term")
            if self.leading <= 0:
                raise ValueError("omega(t) t^{1+s} must have a positive limit at t = 0")
        elif self.func is None or self.support is None:
            raise ValueError("custom weights need a callable and a finite support")

    # constructors ---------------------------------------------------------

    @classmethod
    def fractional(cls, s):
        return cls("fractional", float(s), ((1.0 / fractional_constant(s), 0.0),))

    @classmethod
    def guess3d(cls, s):
        alpha = min(13 / 8 - 1.5 * s, 0.4)
        return cls("guess3d", float(s), ((1.0 - alpha, 0.0), (alpha, 2.0)), params={"alpha": alpha})

    @classmethod
    def guess2d(cls, s):
        beta = 2.0 * (2 * s - 1) ** 2
        return cls("guess2d", float(s), ((1.0 + beta, 0.0), (-beta, 2.0)), params={"beta": beta})

    @classmethod
    def narrow_bump(cls, t0, rel_width=1e-3):
        """Normalized Gaussian bump in log t around t0; tends to a point mass at t0."""
        w = rel_width

        def func(t):
            z = np.log(np.asarray(t, dtype=float) / t0) / w
            return np.exp(-0.5 * z * z) / (t * w * math.sqrt(2 * math.pi))

        support = (t0 * math.exp(-10 * w), t0 * math.exp(10 * w))
        return cls("custom", None, (), func, support, {"t0": t0, "rel_width": w})

    # evaluation -----------------------------------------------------------

    @property
    def leading(self):
        """lim_{t->0} omega(t) t^{1+s}."""
        return float(sum(a for a, _ in self.terms))

    @property
    def closed_form(self):
        return self.form != "custom"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.func is not None:
            return self.func(t)
        total = sum(a * np.exp(-mu * t) for a, mu in self.terms)
        return t ** (-1.0 - self.s) * total

    def transform(self, lam):
        """int_0^inf omega(t) (1 - e^{-lam t}) dt in closed form."""
        if not self.closed_form:
            raise ValueError("custom weights have no closed-form transform")
        lam = np.asarray(lam, dtype=float)
        cs = fractional_constant(self.s)
        return cs * sum(a * ((mu + lam) ** self.s - mu ** self.s) for a, mu in self.terms)

    def tail_mass(self, T):
        """int_T^inf omega(t) dt, keeping only the non-decaying terms."""
        if not self.closed_form:
            return 0.0
        return sum(a for a, mu in self.terms if mu == 0) * T ** (-self.s) / self.s

    def asymptotic_constant(self, d):
        """C with b_omega(cos theta) ~ C theta^{-(d-1+2s)} as theta -> 0."""
        n = d - 1
        return self.leading * math.pi ** (-n / 2) * 4 ** self.s * math.exp(gammaln(n / 2 + self.s))

    def describe(self):
        return {"form": self.form, "s": self.s, "terms": [list(t) for t in self.terms],
                **self.params}


# ---------------------------------------------------------------------------
# Subordinate kernels
# ---------------------------------------------------------------------------

_T_ORDER = 16


def _log_t_panels(t_lo, t_hi):
    a, b = math.log(t_lo), math.log(t_hi)
    n = max(1, int(math.ceil(b - a)))
    return np.linspace(a, b, n + 1)


def _heat_on_panel_2d(t, theta):
    # images for small t, cosine series otherwise; t (m,), theta (k,)
    out = np.zeros((t.size, theta.size))
    small = t < 2.0
    if np.any(small):
        ts = t[small, None]
        acc = np.zeros((ts.shape[0], theta.size))
        for n in range(-3, 4):
            x = theta[None, :] + 2 * math.pi * n
            acc += np.exp(-x * x / (4 * ts))
        out[small] = acc / np.sqrt(4 * math.pi * ts)
    if np.any(~small):
        k = np.arange(1, 12)
        tl = t[~small]
        out[~small] = (1 + 2 * np.exp(-np.outer(tl, k * k)) @ np.cos(np.outer(k, theta))) / (2 * math.pi)
    return out


def subordinate_values(weight: WeightFunction, d: int, theta, t_max: float = T_MAX):
    """b_omega(cos theta) = int h_t(cos theta) omega(t) dt for theta bounded away from 0.

    The t-integral of the summed heat series is taken in log t on unit-width
    panels from theta^2/160 (below which h_t(theta) < e^{-40} h_t(0)) to
    t_max, plus the tail of the non-decaying weight terms, on which h_t is
    constant to within e^{-2 t_max (d-1)}.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    area = surface_area(d - 1)
    out = np.zeros_like(theta)
    if not weight.closed_form:
        lo, hi = weight.support
        edges = np.linspace(math.log(lo), math.log(hi), 41)
        tau, w = composite_gauss(edges, _T_ORDER)
        t = np.exp(tau)
        for j, th in enumerate(theta):
            h = heat_kernel_matrix(t, np.array([th]), d)[:, 0]
            out[j] = np.sum(h * weight(t) * t * w)
        return out
    t_lo = max(float(np.min(theta)) ** 2 / 160.0, 1e-300)
    edges = _log_t_panels(t_lo, t_max)
    for a, b in zip(edges[:-1], edges[1:]):
        tau, w = gauss_legendre(_T_ORDER, a, b)
        t = np.exp(tau)
        # theta values that feel this panel at all
        active = theta ** 2 < 160.0 * math.exp(b)
        if not np.any(active):
            continue
        h = heat_kernel_matrix(t, theta[active], d)
        out[active] += (weight(t) * t * w) @ h
    out += weight.tail_mass(t_max) / area
    return out


def heat_kernel_matrix(t, theta, d):
    """h_t(cos theta) for every pair in t (m,) x theta (k,), cutoff chosen per t."""
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if d == 2:
        return _heat_on_panel_2d(t, theta)
    lmax = int(math.sqrt(40.0 / float(np.min(t)))) + 10
    lam, mult = _eigen_arrays(lmax, d)
    P = legendre_table(lmax, d, np.cos(theta))
    E = mult[None, :] * np.exp(-np.outer(t, lam))
    return E @ P / surface_area(d - 1)


class SubordinateKernel(AngularKernel):
    """b_omega for a subordination weight; asymptotic law below theta_min."""

    family = "subordinate"

    def __init__(self, weight: WeightFunction, d: int, theta_min: float = SUBORDINATE_THETA_MIN):
        nu = const = None
        if weight.closed_form:
            nu = d - 1 + 2 * weight.s
            const = weight.asymptotic_constant(d)
        super().__init__(d, nu, const, theta_min if nu else 0.0, weight.describe())
        self.weight = weight
        if weight.form == "fractional":
            self.family = "fractional-laplacian"

    def _evaluate(self, theta):
        theta = np.asarray(theta, dtype=float)
        flat = theta.ravel()
        if flat.size == 0:
            return theta.copy()
        return subordinate_values(self.weight, self.d, flat).reshape(theta.shape)


def subordinate_kernel(weight: WeightFunction, d: int,
                       theta_min: float = SUBORDINATE_THETA_MIN) -> SubordinateKernel:
    return SubordinateKernel(weight, d, theta_min)


# ---------------------------------------------------------------------------
# Kernel values from multipliers
# ---------------------------------------------------------------------------

RECONSTRUCT_LMAX = 64
_RICHARDSON_FACTOR = 1.5


def _zonal_coefficients(profile, d, lmax, n_nodes):
    # Legendre coefficients c_ell of profile(cos theta) on S^{d-1}
    theta, w = gauss_legendre(n_nodes, 0.0, math.pi)
    jac = np.sin(theta) ** (d - 2)
    P = legendre_table(lmax, d, np.cos(theta))
    f = profile(theta)
    num = P @ (f * jac * w)
    norm = (P ** 2) @ (jac * w)
    return num / norm


def _bump_estimate(spectral, theta0, width, n_nodes):
    d, lmax = spectral.d, spectral.lmax
    coef = _zonal_coefficients(lambda t: np.exp(-0.5 * ((t - theta0) / width) ** 2), d, lmax, n_nodes)
    return -np.dot(spectral.lambda_tilde, coef) / (surface_area(d - 1) * coef[0])


def reconstruct_kernel(spectral: SpectralData, c, width: Optional[float] = None,
                       extrapolate: bool = True):
    """Estimate b(c) from multipliers alone.

    A Gaussian bump phi of angular width w centred at arccos(c) is expanded
    in Legendre polynomials; at the pole, B phi(e_1) = -sum lambda_tilde_ell
    c_ell, while int phi = omega_{d-1} c_0, and the ratio approximates
    b(c) because phi vanishes at the pole.  Default w = 6 / lmax.  The
    smoothing error is O(w^2), so by default the estimates at w and 1.5 w are
    combined to cancel it, provided the wider bump stays six widths clear of
    both poles.
    """
    lmax = spectral.lmax
    width = 6.0 / lmax if width is None else float(width)
    if width < 4.0 / lmax:
        warnings.warn("bump width is within a factor 4 of the angular resolution 1/lmax; "
                      "the reconstruction is under-resolved", RuntimeWarning)
    c_arr = np.atleast_1d(np.asarray(c, dtype=float))
    out = np.empty_like(c_arr)
    n_nodes = 4 * lmax + 200
    for j, cj in enumerate(c_arr):
        theta0 = math.acos(float(np.clip(cj, -1.0, 1.0)))
        fine = _bump_estimate(spectral, theta0, width, n_nodes)
        wide = _RICHARDSON_FACTOR * width
        if extrapolate and 6 * wide < min(theta0, math.pi - theta0):
            coarse = _bump_estimate(spectral, theta0, wide, n_nodes)
            r2 = _RICHARDSON_FACTOR ** 2
            fine = (r2 * fine - coarse) / (r2 - 1)
        out[j] = fine
    return out if np.ndim(c) else float(out[0])


def apply_multipliers(multipliers, coefficients):
    """Diagonal action on a harmonic expansion given by degree-indexed coefficients."""
    return np.asarray(multipliers)[: len(coefficients)] * np.asarray(coefficients)
