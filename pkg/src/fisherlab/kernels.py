"""Angular collision kernels b(cos theta).

Every kernel is evaluated as a function of the deviation angle theta in
(0, pi].  Kernels carry singularity metadata (nu, C) meaning
b(cos theta) ~ C theta^{-nu} as theta -> 0.

Power-law kernels come from classical scattering in the repulsive potential
psi0 / r^{q-1}: the deviation angle theta(p) is computed for impact
parameters p, inverted, and differentiated.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.special import expit, gammaln

from .numerics import composite_gauss, gauss_legendre, graded_edges, surface_area

DEFAULT_THETA_MIN = 1e-3


class DivergenceError(ArithmeticError):
    """An integral that the kernel's singularity makes infinite."""


class MonotonicityError(RuntimeError):
    """The deviation-angle table failed to be strictly monotone."""


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------

def as_fraction(value) -> Fraction:
    """Exact rational from an int, Fraction, decimal string or float (by its repr)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


@dataclass(frozen=True)
class PowerLawPotential:
    """Repulsive potential psi0 / r^{q-1} in dimension d.

    q = (d+1)/2 is accepted as the borderline case (Coulomb in 3D): the kernel
    can be built, but its momentum-transfer integral diverges.
    """

    q: Fraction
    d: int
    psi0: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "q", as_fraction(self.q))
        if self.d < 2:
            raise ValueError("dimension must be >= 2")
        if not (self.q > 1 and self.q >= Fraction(self.d + 1, 2)):
            raise ValueError(f"q must be at least (d+1)/2 = {(self.d + 1) / 2}; below it the "
                             "momentum-transfer cross-section is infinite")
        if not self.psi0 > 0:
            raise ValueError("psi0 must be positive")

    @property
    def gamma(self) -> Fraction:
        return (self.q - 2 * self.d + 1) / (self.q - 1)

    @property
    def two_s(self) -> Fraction:
        return Fraction(self.d - 1) / (self.q - 1)

    @property
    def s(self) -> float:
        return float(self.two_s) / 2

    @property
    def qf(self) -> float:
        return float(self.q)

    @property
    def nu(self) -> float:
        return self.d - 1 + float(self.two_s)

    def limit_constant(self) -> float:
        """lim theta^{d-1+2s} b_col(cos theta) as theta -> 0."""
        q = self.qf
        two_s = float(self.two_s)
        log_ratio = 0.5 * math.log(math.pi) + gammaln(q / 2) - gammaln(q / 2 - 0.5)
        return (4 * self.psi0) ** two_s * math.exp(two_s * log_ratio) / (q - 1)


# ---------------------------------------------------------------------------
# Orbit integrals
# ---------------------------------------------------------------------------

def _closest_approach_parts(pot, p):
    """Return (r0, a, 1 - a) with a = (p / r0)^2, computed without cancellation.

    With y = p / r0 the turning-point equation reads
    1 - y^2 = c y^{q-1}, c = 4 psi0 p^{1-q}.  Writing y^2 = expit(z) gives a
    decreasing function of z whose root is bracketed explicitly.
    """
    p = np.asarray(p, dtype=float)
    q = pot.qf
    k = 0.5 * (q - 1)
    r0 = np.empty_like(p)
    a = np.zeros_like(p)
    one_minus_a = np.ones_like(p)
    zero = p == 0
    r0[zero] = (4 * pot.psi0) ** (1 / (q - 1))
    pos = ~zero
    if np.any(pos):
        pp = p[pos]
        lc = math.log(4 * pot.psi0) + (1 - q) * np.log(pp)

        def F(z):
            return -np.logaddexp(0.0, z) - lc + k * np.logaddexp(0.0, -z)

        bound = np.abs(lc) / min(k, 1.0) + 50.0
        lo, hi = -bound, bound.copy()
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = F(mid)
            lo = np.where(fm > 0, mid, lo)
            hi = np.where(fm > 0, hi, mid)
            if np.all(hi - lo <= 1e-14 * np.maximum(1.0, np.abs(mid))):
                break
        z = 0.5 * (lo + hi)
        for _ in range(3):
            # Newton polish; F'(z) = -expit(z) - k expit(-z)
            dF = -expit(z) - k * expit(-z)
            z = z - F(z) / dF
        a_pos = expit(z)
        a[pos] = a_pos
        one_minus_a[pos] = expit(-z)
        r0[pos] = pp / np.sqrt(a_pos)
    return r0, a, one_minus_a


def closest_approach(pot: PowerLawPotential, p):
    """Turning point r0 > 0 of 1 - p^2/r^2 - 4 psi0 / r^{q-1} = 0."""
    if np.any(np.asarray(p) < 0):
        raise ValueError("impact parameter must be >= 0")
    r0, _, _ = _closest_approach_parts(pot, p)
    return r0 if np.ndim(p) else float(r0)


_ORBIT_ORDER = 64
_SPLIT = 0.5
_INNER_POWER = 6


@lru_cache(maxsize=4)
def _orbit_rule(order):
    # [0, 1/2]: u = w^6 smooths the u^{q-1} branch point at 0
    w, ww = gauss_legendre(order, 0.0, _SPLIT ** (1 / _INNER_POWER))
    u1 = w ** _INNER_POWER
    j1 = ww * _INNER_POWER * w ** (_INNER_POWER - 1)
    # [1/2, 1]: u = 1 - v^2 removes the inverse square root at the turning point
    v, wv = gauss_legendre(order, 0.0, math.sqrt(1 - _SPLIT))
    return u1, j1, v, wv * 2 * v


def _orbit_angles(pot, p, order=_ORBIT_ORDER):
    """(theta, pi - theta), each from a form that keeps full relative accuracy.

    With r = r0 / u, a = (p / r0)^2 and
    F = a (1 - u^2) + (1 - a)(1 - u^{q-1}),
        pi - theta = 2 sqrt(a) int_0^1 du / sqrt(F),
        theta = 2 (1 - a) int_0^1 (1 - u^{q-1}) /
                (sqrt(1 - u^2) sqrt(F) (sqrt(F) + sqrt(a (1 - u^2)))) du.
    The second is the first subtracted from pi analytically, so it has no
    cancellation for grazing collisions; the first has none near head-on.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any(p < 0):
        raise ValueError("impact parameter must be >= 0")
    q = pot.qf
    _, a, b = _closest_approach_parts(pot, p)
    a = a[:, None]
    b = b[:, None]
    u1, j1, v, j2 = _orbit_rule(order)

    def parts(one_minus_u2, one_minus_uq):
        F = a * one_minus_u2 + b * one_minus_uq
        sF = np.sqrt(F)
        s2 = np.sqrt(one_minus_u2)
        small = one_minus_uq / (s2 * sF * (sF + np.sqrt(a) * s2))
        return small, 1.0 / sF

    t1, c1 = parts(1 - u1 ** 2, -np.expm1((q - 1) * np.log(u1)))
    v2 = v * v
    t2, c2 = parts(v2 * (2 - v2), -np.expm1((q - 1) * np.log1p(-v2)))
    theta = 2 * b[:, 0] * (t1 @ j1 + t2 @ j2)
    chi = 2 * np.sqrt(a[:, 0]) * (c1 @ j1 + c2 @ j2)
    head_on = p == 0
    theta = np.where(head_on, math.pi, theta)
    chi = np.where(head_on, 0.0, chi)
    return theta, chi


def deviation_angle(pot: PowerLawPotential, p, order: int = _ORBIT_ORDER):
    """Scattering angle theta(p) in (0, pi] for impact parameter p >= 0."""
    scalar = np.ndim(p) == 0
    theta, chi = _orbit_angles(pot, p, order)
    theta = np.where(theta < math.pi / 2, theta, math.pi - chi)
    return float(theta[0]) if scalar else theta


def _orbit_logit(pot, p):
    """z = log(theta / (pi - theta)) at impact parameters p."""
    theta, chi = _orbit_angles(pot, p)
    return np.log(theta) - np.log(chi)


def dtheta_dlogp(pot, p, step=1e-4):
    """d theta / d log p, via extrapolated central differences of log(theta / (pi - theta))."""
    p = np.asarray(p, dtype=float)

    def central(h):
        return (_orbit_logit(pot, p * math.exp(h)) - _orbit_logit(pot, p * math.exp(-h))) / (2 * h)

    # one Richardson step removes the O(h^2) term
    dz = (4 * central(step) - central(2 * step)) / 3
    theta, chi = _orbit_angles(pot, p)
    return dz * theta * chi / math.pi


def _logit_angle(theta):
    return np.log(theta) - np.log(math.pi - theta)


@dataclass
class DeviationTable:
    """Monotone table of the deviation angle against impact parameter.

    Internally log p is interpolated as a cubic Hermite function of
    z = log(theta / (pi - theta)); node slopes come from direct
    differentiation of the orbit integral, so b_col is exact at the nodes.
    """

    potential: PowerLawPotential
    p_grid: np.ndarray
    theta: np.ndarray
    dp_dtheta: np.ndarray
    theta_lo: float
    theta_hi: float
    chi: np.ndarray = field(repr=False, default=None)
    _spline: CubicHermiteSpline = field(repr=False, default=None)
    _inverse: CubicHermiteSpline = field(repr=False, default=None)

    def __post_init__(self):
        if self.chi is None:
            self.chi = math.pi - self.theta
        z = np.log(self.theta) - np.log(self.chi)
        y = np.log(self.p_grid)
        dzdy = self.dp_dtheta ** -1 * self.p_grid * math.pi / (self.theta * self.chi)
        order = np.argsort(z)
        self._spline = CubicHermiteSpline(z[order], y[order], 1.0 / dzdy[order])
        order_y = np.argsort(y)
        self._inverse = CubicHermiteSpline(y[order_y], z[order_y], dzdy[order_y])

    def p_of_theta(self, theta):
        return np.exp(self._spline(_logit_angle(np.asarray(theta, dtype=float))))

    def theta_of_p(self, p):
        z = self._inverse(np.log(np.asarray(p, dtype=float)))
        return math.pi * expit(z)

    def b_col(self, theta):
        """-(p / sin theta)^{d-2} dp/dtheta, valid on [theta_lo, theta_hi]."""
        theta = np.asarray(theta, dtype=float)
        z = _logit_angle(theta)
        y = self._spline(z)
        dydz = self._spline(z, 1)
        p = np.exp(y)
        dp_dtheta = p * dydz * math.pi / (theta * (math.pi - theta))
        d = self.potential.d
        return -((p / np.sin(theta)) ** (d - 2)) * dp_dtheta


def _table_nodes(pot, theta_lo, theta_hi, n):
    # bracket log p so that the table spans [theta_lo, theta_hi]
    lp_hi = 0.0
    while deviation_angle(pot, math.exp(lp_hi)) > theta_lo:
        lp_hi += 1.0
    lp_lo = 0.0
    while deviation_angle(pot, math.exp(lp_lo)) < theta_hi:
        lp_lo -= 1.0
    lp = np.linspace(lp_lo, lp_hi, 400)
    z = _orbit_logit(pot, np.exp(lp))
    if np.any(np.diff(z) >= 0):
        raise MonotonicityError("deviation angle is not decreasing in p on the coarse grid")
    z_lo, z_hi = _logit_angle(theta_lo), _logit_angle(theta_hi)
    # descending z, so the returned impact parameters increase
    targets = np.linspace(z_hi, z_lo, n)
    return np.interp(targets, z[::-1], lp[::-1])


def _build_table(pot, theta_lo, theta_hi, n):
    lp = _table_nodes(pot, theta_lo, theta_hi, n)
    p = np.exp(lp)
    theta = deviation_angle(pot, p)
    _, chi = _orbit_angles(pot, p)
    slope = dtheta_dlogp(pot, p)
    if np.any(np.diff(theta) >= 0) or np.any(slope >= 0):
        bad = int(np.argmax(np.diff(theta) >= 0))
        raise MonotonicityError(
            f"deviation angle not strictly decreasing near p={p[bad]:.6g} "
            f"(theta={theta[bad]:.6g}); orbit quadrature failed")
    return DeviationTable(pot, p, theta, p / slope, theta_lo, theta_hi, chi)


def build_deviation_table(pot: PowerLawPotential, theta_lo: float = DEFAULT_THETA_MIN / 2,
                          theta_gap: float = 1e-6, n: int = 256, rel_tol: float = 1e-7,
                          max_doublings: int = 6) -> DeviationTable:
    """Tabulate theta(p) on [theta_lo, pi - theta_gap], doubling until b_col settles.

    Convergence is measured by evaluating the coarse interpolant at the
    nodes of the refined table, where b_col is known exactly.
    """
    theta_hi = math.pi - theta_gap
    table = _build_table(pot, theta_lo, theta_hi, n)
    for _ in range(max_doublings):
        n *= 2
        finer = _build_table(pot, theta_lo, theta_hi, n)
        exact = -(finer.p_grid / np.sin(finer.theta)) ** (pot.d - 2) * finer.dp_dtheta
        change = np.max(np.abs(table.b_col(finer.theta) / exact - 1))
        table = finer
        if change < rel_tol:
            return table
    raise MonotonicityError(f"deviation table did not settle: last relative change {change:.3g}")


# ---------------------------------------------------------------------------
# Kernel objects
# ---------------------------------------------------------------------------

class AngularKernel:
    """Angular cross-section b(cos theta) with singularity metadata.

    Subclasses implement `_evaluate(theta)` for theta >= theta_min.  Below
    theta_min the asymptotic law C theta^{-nu} is used when declared.
    """

    family = "generic"

    def __init__(self, d, nu=None, const=None, theta_min=0.0, params=None):
        self.d = int(d)
        self.nu = nu
        self.const = const
        self.theta_min = float(theta_min)
        self.params = dict(params or {})

    @property
    def singularity(self):
        if self.nu is None or self.nu <= 0:
            return "none"
        return (self.nu, self.const)

    @property
    def singular(self):
        return self.nu is not None and self.nu > 0

    def _evaluate(self, theta):
        raise NotImplementedError

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.singular and self.theta_min > 0:
            small = theta < self.theta_min
            if np.any(small):
                out = np.empty_like(theta)
                out[small] = self.const * theta[small] ** (-self.nu)
                out[~small] = self._evaluate(theta[~small])
                return out
        return self._evaluate(theta)

    def at_cosine(self, c):
        return self(np.arccos(np.clip(c, -1.0, 1.0)))

    def describe(self):
        nu, C = (self.nu, self.const) if self.singular else (None, None)
        return {"family": self.family, "d": self.d, "params": self.params,
                "singularity_exponent": nu, "singularity_constant": C}

    def __repr__(self):
        return f"{type(self).__name__}(d={self.d}, params={self.params})"


class ClosedFormKernel(AngularKernel):
    def __init__(self, family, d, func, nu=None, const=None, params=None):
        super().__init__(d, nu, const, 0.0, params)
        self.family = family
        self._func = func

    def _evaluate(self, theta):
        return self._func(theta)


class PowerLawKernel(AngularKernel):
    family = "power-law"

    def __init__(self, pot: PowerLawPotential, table: DeviationTable, theta_min=DEFAULT_THETA_MIN):
        super().__init__(pot.d, pot.nu, pot.limit_constant(), theta_min,
                         {"q": str(pot.q), "psi0": pot.psi0})
        self.potential = pot
        self.table = table

    def _evaluate(self, theta):
        theta = np.clip(theta, self.table.theta_lo, self.table.theta_hi)
        return self.table.b_col(theta)


@lru_cache(maxsize=64)
def _cached_power_law(q, d, psi0, theta_min, rel_tol):
    pot = PowerLawPotential(q, d, psi0)
    table = build_deviation_table(pot, theta_lo=min(theta_min, DEFAULT_THETA_MIN) / 2,
                                  rel_tol=rel_tol)
    return PowerLawKernel(pot, table, theta_min)


def power_law_kernel(pot: PowerLawPotential, theta_min: float = DEFAULT_THETA_MIN,
                     rel_tol: float = 1e-7) -> PowerLawKernel:
    """b_col for the inverse power-law potential; tables are cached per parameters."""
    return _cached_power_law(pot.q, pot.d, pot.psi0, float(theta_min), float(rel_tol))


def rutherford_kernel(d) -> ClosedFormKernel:
    """sin(theta/2)^{-2(d-1)}."""
    e = 2 * (d - 1)
    return ClosedFormKernel("rutherford", d, lambda t: np.sin(t / 2) ** (-e),
                            nu=float(e), const=2.0 ** e)


def hard_sphere_kernel(d) -> ClosedFormKernel:
    """sin(theta/2)^{-(d-3)}; identically 1 in three dimensions."""
    e = d - 3
    if e > 0:
        return ClosedFormKernel("hard-sphere", d, lambda t: np.sin(t / 2) ** (-e),
                                nu=float(e), const=2.0 ** e)
    return ClosedFormKernel("hard-sphere", d, lambda t: np.sin(t / 2) ** (-e))


def constant_kernel(d, value=1.0) -> ClosedFormKernel:
    return ClosedFormKernel("constant", d, lambda t: np.full(np.shape(t), float(value)),
                            params={"value": value})


@lru_cache(maxsize=1)
def _mollifier_mass():
    from scipy.integrate import quad

    return quad(lambda x: math.exp(-1.0 / (1.0 - x * x)), -1.0, 1.0, epsabs=1e-15)[0]


class ConcentratedKernel(AngularKernel):
    """Standard mollifier of half-width eps centred at `center`, unit mass in theta.

    b(theta) = rho((theta - center)/eps)/eps with rho(x) = exp(-1/(1-x^2))/Z
    on |x| < 1.  As eps -> 0 it tends to a point mass at deviation angle
    `center`; with center = pi/2 in two dimensions this is the kernel for
    which the spherical inequality only holds with Lambda = 0.
    """

    family = "concentrated"

    def __init__(self, d=2, eps=0.01, center=math.pi / 2):
        if not 0 < eps < min(center, math.pi - center):
            raise ValueError("eps must be positive and keep the support inside (0, pi)")
        super().__init__(d, params={"eps": eps, "center": center})
        self.eps = float(eps)
        self.center = float(center)

    def _evaluate(self, theta):
        x = (np.asarray(theta, dtype=float) - self.center) / self.eps
        inside = np.abs(x) < 1
        xs = np.where(inside, x, 0.0)
        return np.where(inside, np.exp(-1.0 / (1.0 - xs * xs)), 0.0) / (_mollifier_mass() * self.eps)

    @property
    def breakpoints(self):
        return tuple(self.center + k * self.eps / 8 for k in range(-8, 9))


class TabulatedKernel(AngularKernel):
    """Kernel interpolated log-log from samples (theta_i, b_i)."""

    family = "tabulated"

    def __init__(self, d, theta, values, nu=None, const=None, params=None, source_family=None):
        theta = np.asarray(theta, dtype=float)
        values = np.asarray(values, dtype=float)
        order = np.argsort(theta)
        self._lt = np.log(theta[order])
        self._lb = np.log(values[order])
        super().__init__(d, nu, const, float(theta[order][0]) if nu else 0.0, params)
        self.source_family = source_family

    def _evaluate(self, theta):
        return np.exp(np.interp(np.log(theta), self._lt, self._lb))


class SymmetrizedKernel:
    """b_sym(c) = b(c) + b(-c); as a function of theta, b(theta) + b(pi - theta)."""

    def __init__(self, source: AngularKernel):
        self.source = source
        self.d = source.d
        self.nu = source.nu
        self.const = source.const
        self.theta_min = source.theta_min

    @property
    def singular(self):
        return self.source.singular

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.source(theta) + self.source(math.pi - theta)

    def at_cosine(self, c):
        c = np.asarray(c, dtype=float)
        return self.source.at_cosine(c) + self.source.at_cosine(-c)

    def describe(self):
        out = self.source.describe()
        out["symmetrized"] = True
        return out


def symmetrize(kernel) -> SymmetrizedKernel:
    return kernel if isinstance(kernel, SymmetrizedKernel) else SymmetrizedKernel(kernel)


# ---------------------------------------------------------------------------
# Angular integrals
# ---------------------------------------------------------------------------

def angular_rule(kernel=None, smallest=1e-12, order=16, breakpoints=()):
    """Nodes and weights on (0, pi) graded towards theta = 0.

    Panels halve towards 0 down to `smallest`; the kernel's theta_min and any
    extra breakpoints are inserted so that piecewise definitions are
    integrated panel by panel.
    """
    edges = graded_edges(0.0, math.pi / 2, smallest)
    extra = [math.pi * k / 8 for k in range(5, 9)]
    cuts = list(breakpoints)
    if kernel is not None and kernel.theta_min > 0:
        cuts.append(kernel.theta_min)
    edges = np.unique(np.concatenate((edges, extra, [c for c in cuts if 0 < c < math.pi])))
    return composite_gauss(edges, order)


def _angular_integral(kernel, weight, near_zero_exponent, order=16):
    # integrand kernel(theta) * weight(theta), behaving like theta^e near 0
    smallest = 1e-12
    x, w = angular_rule(kernel, smallest, order)
    val = float(np.sum(kernel(x) * weight(x) * w))
    x2, w2 = angular_rule(kernel, smallest, order + 8)
    val2 = float(np.sum(kernel(x2) * weight(x2) * w2))
    err = abs(val2 - val)
    if kernel.singular and near_zero_exponent is not None:
        # analytic remainder on (0, smallest) from the leading power law
        e = near_zero_exponent
        lead = kernel.const * float(weight(np.array([smallest]))[0]) * smallest ** (-kernel.nu)
        err += abs(lead * smallest / (e + 1))
        val2 += lead * smallest / (e + 1)
    return val2, err


def momentum_transfer(kernel, with_error=False):
    """omega_{d-2} int_{-1}^{1} (1 - c^2)^{(d-1)/2} b(c) dc."""
    d = kernel.d
    if kernel.singular and kernel.nu >= d + 1:
        raise DivergenceError(
            f"momentum-transfer integral diverges: exponent nu={kernel.nu} >= d+1={d + 1}")
    e = d - kernel.nu if kernel.singular else None
    val, err = _angular_integral(kernel, lambda t: np.sin(t) ** d, e)
    area = surface_area(d - 2)
    return (area * val, area * err) if with_error else area * val


# ---------------------------------------------------------------------------
# CSV import / export
# ---------------------------------------------------------------------------

def export_kernel_csv(kernel, theta, stream=None, extra_header=None):
    """Write '# key=value' header lines then theta,b_value rows; returns the text."""
    theta = np.asarray(theta, dtype=float)
    values = kernel(theta)
    meta = kernel.describe()
    buf = io.StringIO()
    for line in (extra_header or []):
        buf.write(f"# {line}\n")
    buf.write("# kernel=" + json.dumps(meta, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["theta", "b_value"])
    for t, b in zip(theta, values):
        writer.writerow([repr(float(t)), repr(float(b))])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def import_kernel_csv(text) -> TabulatedKernel:
    meta = None
    rows = []
    for line in text.splitlines():
        if line.startswith("# kernel="):
            meta = json.loads(line[len("# kernel="):])
        elif line.startswith("#") or not line.strip():
            continue
        elif line.startswith("theta"):
            continue
        else:
            t, b = line.split(",")
            rows.append((float(t), float(b)))
    if meta is None:
        raise ValueError("missing kernel header line")
    arr = np.array(rows)
    return TabulatedKernel(meta["d"], arr[:, 0], arr[:, 1], meta["singularity_exponent"],
                           meta["singularity_constant"], meta["params"], meta["family"])
