"""Numerical checks of the inequalities behind the monotonicity criterion.

Two-dimensional checks work with pi-periodic functions of one angle; the
spherical inequality then reduces to double integrals over an angle theta
and a deviation h.  On S^2 the checks use product grids and test functions
whose logarithm is an even polynomial, so gradients are exact.

Every check returns a CheckReport that serializes to
{check, draws, worst, margin, pass, details}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import geometry as G
from .constants import cK_curvature, lambda_local
from .kernels import ConcentratedKernel, symmetrize
from .numerics import (NonConvergenceError, composite_gauss, gauss_legendre, graded_edges,
                       legendre_defect_table, surface_area)
from .spectral import laplace_eigenvalue

LEGENDRE_TOL = 1e-10


@dataclass
class CheckReport:
    check: str
    draws: int
    worst: float
    margin: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"check": self.check, "draws": self.draws, "worst": self.worst,
                "margin": self.margin, "pass": bool(self.passed), "details": self.details}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


# ---------------------------------------------------------------------------
# Legendre inequality and the elementary chain
# ---------------------------------------------------------------------------

def check_legendre_inequality(d: int, lmax: int = 20, x=None) -> CheckReport:
    """Max over ell <= lmax and the grid of (1 - P_2l(x)) - (lambda_2l/lambda_2)(1 - P_2(x))."""
    if d < 2 or lmax < 1:
        raise ValueError("need d >= 2 and lmax >= 1")
    x = np.linspace(-1.0, 1.0, 1001) if x is None else np.asarray(x, dtype=float)
    theta = np.arccos(np.clip(x, -1.0, 1.0))
    Q = legendre_defect_table(2 * lmax, d, theta)
    lam2 = laplace_eigenvalue(2, d)
    worst, where = -math.inf, None
    for ell in range(1, lmax + 1):
        excess = Q[2 * ell] - laplace_eigenvalue(2 * ell, d) / lam2 * Q[2]
        i = int(np.argmax(excess))
        if excess[i] > worst:
            worst, where = float(excess[i]), (ell, float(x[i]))
    return CheckReport("legendre", lmax * x.size, worst, LEGENDRE_TOL - worst,
                       worst <= LEGENDRE_TOL, {"d": d, "lmax": lmax, "grid": int(x.size),
                                               "worst_ell": where[0], "worst_x": where[1]})


def elementary_chain(a, b):
    """The three quantities (a-b)log(a/b), 4(sqrt a - sqrt b)^2 and 2(a-b)^2/(a+b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return ((a - b) * np.log(a / b), 4.0 * (np.sqrt(a) - np.sqrt(b)) ** 2,
            2.0 * (a - b) ** 2 / (a + b))


def check_elementary_chain(n: int = 100_000, seed: int = 0) -> CheckReport:
    """The chain on n log-uniform pairs in [1e-3, 1e3]^2, divided by (a-b)^2 to avoid cancellation."""
    rng = np.random.default_rng(seed)
    a = np.exp(rng.uniform(-3, 3, n) * math.log(10))
    b = np.exp(rng.uniform(-3, 3, n) * math.log(10))
    diff = a - b
    # each member divided by (a - b)^2, written without subtracting nearby numbers
    first = np.where(diff != 0, np.log(a / b) / np.where(diff != 0, diff, 1.0), 1.0 / b)
    second = 4.0 / (np.sqrt(a) + np.sqrt(b)) ** 2
    third = 2.0 / (a + b)
    gap1 = (first - second) / first
    gap2 = (second - third) / second
    worst = float(min(gap1.min(), gap2.min()))
    return CheckReport("elementary-chain", n, worst, worst, worst >= 0.0,
                       {"seed": seed, "min_gap_log_vs_sqrt": float(gap1.min()),
                        "min_gap_sqrt_vs_harmonic": float(gap2.min())})


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SphereGrid2D:
    """Equispaced nodes on [0, pi) for pi-periodic functions; the rule is spectrally accurate."""

    n_theta: int = 256

    @property
    def nodes(self):
        return np.arange(self.n_theta) * (math.pi / self.n_theta)

    @property
    def weights(self):
        return np.full(self.n_theta, math.pi / self.n_theta)

    def refined(self):
        return SphereGrid2D(2 * self.n_theta)


@dataclass(frozen=True)
class SphereGridS2:
    """Gauss nodes in the polar cosine times uniform azimuth; weights sum to 4 pi."""

    n_polar: int = 24
    n_azimuth: int = 48

    def _local(self):
        c, wc = gauss_legendre(self.n_polar)
        phi = np.arange(self.n_azimuth) * (2 * math.pi / self.n_azimuth)
        C, PHI = np.meshgrid(c, phi, indexing="ij")
        W = np.repeat(wc[:, None] * (2 * math.pi / self.n_azimuth), self.n_azimuth, axis=1)
        return C.ravel(), PHI.ravel(), W.ravel()

    def points(self, pole=None):
        """Nodes (N, 3) and weights; with `pole`, the grid's axis is turned onto that point."""
        c, phi, w = self._local()
        r = np.sqrt(np.clip(1 - c * c, 0.0, None))
        if pole is None:
            pts = np.stack((r * np.cos(phi), r * np.sin(phi), c), axis=-1)
        else:
            pole = np.asarray(pole, dtype=float)
            e1, e2 = G.tangent_frame(pole)
            pts = (c[:, None] * pole + (r * np.cos(phi))[:, None] * e1
                   + (r * np.sin(phi))[:, None] * e2)
        return pts, w

    @property
    def weights(self):
        return self._local()[2]

    def refined(self):
        return SphereGridS2(2 * self.n_polar, 2 * self.n_azimuth)


# ---------------------------------------------------------------------------
# Test functions
# ---------------------------------------------------------------------------

class PeriodicFunction:
    """Positive pi-periodic function of an angle with its logarithmic derivative."""

    def __init__(self, value, dlog, label="custom"):
        self._value = value
        self._dlog = dlog
        self.label = label

    def __call__(self, theta):
        return self._value(np.asarray(theta, dtype=float))

    def dlog(self, theta):
        return self._dlog(np.asarray(theta, dtype=float))


def exp_trig(cos_coef: Sequence[float], sin_coef: Sequence[float]) -> PeriodicFunction:
    """exp(sum_k a_k cos(2k theta) + b_k sin(2k theta)), k = 1..K."""
    a = np.asarray(cos_coef, dtype=float)
    b = np.asarray(sin_coef, dtype=float)
    k = 2.0 * np.arange(1, a.size + 1)

    def logf(t):
        kt = np.multiply.outer(t, k)
        return np.cos(kt) @ a + np.sin(kt) @ b

    def dlog(t):
        kt = np.multiply.outer(t, k)
        return np.cos(kt) @ (k * b) - np.sin(kt) @ (k * a)

    return PeriodicFunction(lambda t: np.exp(logf(t)), dlog, "exp-trig")


def _phi(x):
    # e^{-1/x} for x > 0, else 0, with its derivative
    pos = x > 0
    safe = np.where(pos, x, 1.0)
    v = np.where(pos, np.exp(-1.0 / safe), 0.0)
    return v, np.where(pos, v / safe ** 2, 0.0)


def smooth_step(x):
    """C-infinity step from 0 (x <= 0) to 1 (x >= 1), and its derivative."""
    p, dp = _phi(x)
    q, dq = _phi(1.0 - x)
    s = p + q
    return p / s, (dp * q + p * dq) / s ** 2


def smooth_bump(x):
    """exp(4 - 1/(x(1-x))) on (0, 1), zero outside; maximum 1 at x = 1/2."""
    inside = (x > 0) & (x < 1)
    safe = np.where(inside, x, 0.5)
    u = safe * (1 - safe)
    v = np.where(inside, np.exp(4.0 - 1.0 / u), 0.0)
    return v, np.where(inside, v * (1 - 2 * safe) / u ** 2, 0.0)


def _plateau_profile(theta):
    # pi-periodic: 1 -> 2 on [0, pi/4], 2 on [pi/4, pi/2], 2 -> 1 on [pi/2, 3pi/4], 1 after
    q = math.pi / 4
    t = np.mod(theta, math.pi)
    up, dup = smooth_step(t / q)
    down, ddown = smooth_step((t - 2 * q) / q)
    return 1.0 + up - down, (dup - ddown) / q


def _quarter_bump(theta):
    # pi/2-periodic, supported in [pi/4, pi/2] modulo pi/2
    q = math.pi / 4
    t = np.mod(theta, 2 * q)
    v, dv = smooth_bump((t - q) / q)
    return v, dv / q


def counterexample_function(A: float) -> PeriodicFunction:
    """f = (1 + A psi) h with h the two-level profile and psi the quarter-period bump."""
    def value(t):
        return (1.0 + A * _quarter_bump(t)[0]) * _plateau_profile(t)[0]

    def dlog(t):
        psi, dpsi = _quarter_bump(t)
        h, dh = _plateau_profile(t)
        return A * dpsi / (1.0 + A * psi) + dh / h

    return PeriodicFunction(value, dlog, f"counterexample:A={A}")


def bump_perturbed(base: PeriodicFunction, A: float, center: float, width: float) -> PeriodicFunction:
    """base * (1 + A psi) with psi a smooth bump of the given width, repeated with period pi."""
    def psi(t):
        x = (np.mod(t - center + width / 2, math.pi)) / width
        v, dv = smooth_bump(x)
        return v, dv / width

    def value(t):
        return base(t) * (1.0 + A * psi(t)[0])

    def dlog(t):
        v, dv = psi(t)
        return base.dlog(t) + A * dv / (1.0 + A * v)

    return PeriodicFunction(value, dlog, "bump-perturbed")


class ExpPolynomialS2:
    """f(sigma) = exp(sigma'Q sigma + kappa (sigma'R sigma)^2) on S^{d-1}; even and positive."""

    def __init__(self, Q, R=None, kappa=0.0):
        self.Q = np.asarray(Q, dtype=float)
        self.R = np.zeros_like(self.Q) if R is None else np.asarray(R, dtype=float)
        self.kappa = float(kappa)
        self.d = self.Q.shape[0]

    def log(self, sigma):
        qs = np.einsum("...i,ij,...j->...", sigma, self.Q, sigma)
        rs = np.einsum("...i,ij,...j->...", sigma, self.R, sigma)
        return qs + self.kappa * rs ** 2

    def __call__(self, sigma):
        return np.exp(self.log(np.asarray(sigma, dtype=float)))

    def grad_log(self, sigma):
        """Tangential gradient of log f."""
        sigma = np.asarray(sigma, dtype=float)
        rs = np.einsum("...i,ij,...j->...", sigma, self.R, sigma)
        amb = 2.0 * sigma @ self.Q + 4.0 * self.kappa * rs[..., None] * (sigma @ self.R)
        return G.project_tangent(sigma, amb)


def zonal_test_function(amplitude=0.3, d=3):
    """exp(amplitude (3 sigma_d^2 - 1)); log f is a multiple of the second zonal harmonic."""
    Q = np.zeros((d, d))
    Q[-1, -1] = 3 * amplitude
    Q -= amplitude * np.eye(d)
    return ExpPolynomialS2(Q)


def _random_symmetric(rng, d, scale):
    m = rng.standard_normal((d, d)) * scale
    return 0.5 * (m + m.T)


KINDS = ("exp-trig-poly", "bump-perturbed", "counterexample-pair")


@dataclass(frozen=True)
class TestFunctionFamily:
    """Seeded generator of positive even test functions.

    exp-trig-poly: exponentials of even trigonometric (d = 2) or even
    polynomial (d = 3) functions; bump-perturbed: exp-trig-poly times
    (1 + A psi) with a random smooth bump (d = 2); counterexample-pair: the
    two-level profile with a quarter-period bump at each amplitude A in
    params["A"] (d = 2).
    """

    __test__ = False  # not a pytest class

    kind: str = "exp-trig-poly"
    d: int = 2
    seed: int = 0
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown test function family {self.kind!r}")
        if self.kind != "exp-trig-poly" and self.d != 2:
            raise ValueError(f"{self.kind} is only defined for d = 2")

    def _param(self, name, default):
        return dict(self.params).get(name, default)

    def draws(self, n: int):
        rng = np.random.default_rng(self.seed)
        if self.kind == "counterexample-pair":
            return [counterexample_function(A) for A in self._param("A", (1.0, 100.0))]
        scale = self._param("scale", 1.0)
        out = []
        for _ in range(n):
            if self.d == 2:
                K = self._param("degree", 3)
                amp = scale * rng.uniform(0.05, 1.0) / np.arange(1, K + 1)
                f = exp_trig(amp * rng.standard_normal(K), amp * rng.standard_normal(K))
                if self.kind == "bump-perturbed":
                    f = bump_perturbed(f, rng.uniform(0.5, 5.0), rng.uniform(0, math.pi),
                                       rng.uniform(0.3, 1.5))
            else:
                amp = scale * rng.uniform(0.05, 1.0)
                f = ExpPolynomialS2(_random_symmetric(rng, self.d, amp),
                                    _random_symmetric(rng, self.d, 1.0),
                                    amp * rng.uniform(-0.3, 0.3))
            out.append(f)
        return out


def spectral_derivative(values, period: float = math.pi):
    """Derivative of equispaced periodic samples by Fourier differentiation."""
    values = np.asarray(values, dtype=float)
    n = values.size
    k = np.fft.rfftfreq(n, d=period / n) * 2 * math.pi
    coef = np.fft.rfft(values) * 1j * k
    if n % 2 == 0:
        coef[-1] = 0.0
    return np.fft.irfft(coef, n)


# ---------------------------------------------------------------------------
# Two-dimensional spherical inequality
# ---------------------------------------------------------------------------

def _deviation_rule(kernel, order=16):
    # nodes on (0, pi/2], graded at 0, with the kernel's breakpoints folded in
    cuts = [c for c in getattr(kernel, "breakpoints", ()) if 0 < c < math.pi]
    cuts = [min(c, math.pi - c) for c in cuts]
    edges = graded_edges(0.0, math.pi / 2, 1e-8 if kernel.singular else 1e-3)
    edges = np.unique(np.concatenate((edges, [c for c in cuts if c < math.pi / 2],
                                      [math.pi / 4, 3 * math.pi / 8])))
    return composite_gauss(edges, order)


def _pair_integrals(kernel, f, grid):
    theta, wt = grid.nodes, grid.weights
    h, wh = _deviation_rule(kernel)
    bsym = symmetrize(kernel)(h)
    ft, gt = f(theta), f.dlog(theta)
    lhs = rhs = 0.0
    for shift in (h, math.pi - h):
        tp = theta[:, None] + shift[None, :]
        fp, gp = f(tp), f.dlog(tp)
        lhs += 0.5 * np.einsum("i,ij,j->", wt * ft, (gp - gt[:, None]) ** 2, wh * bsym)
        rhs += np.einsum("i,ij,j->", wt, (fp - ft[:, None]) ** 2 / (fp + ft[:, None]), wh * bsym)
    return float(lhs), float(rhs)


def inequality_2d_ratio(kernel, f: PeriodicFunction, grid: SphereGrid2D = SphereGrid2D(),
                        rel_tol: float = 1e-6, max_doublings: int = 4):
    """(lhs, rhs, lhs/rhs) of the spherical inequality written on the circle.

    With theta the angle and h the deviation, and b_sym(h) = b(h) + b(pi - h),
    lhs = 1/2 int_0^pi int_0^pi f(theta) (g'(theta+h) - g'(theta))^2 b_sym(h)
    and rhs = int int (f(theta+h) - f(theta))^2 / (f(theta+h) + f(theta)) b_sym(h),
    where g = log f.  The ratio is +inf when rhs vanishes (f constant).
    The theta grid is doubled until both sides settle to rel_tol.
    """
    vals = f(grid.nodes)
    if np.any(~(vals > 0)):
        raise ValueError("test function must be positive")
    lhs, rhs = _pair_integrals(kernel, f, grid)
    for _ in range(max_doublings):
        grid = grid.refined()
        l2, r2 = _pair_integrals(kernel, f, grid)
        scale = max(abs(l2), abs(r2), 1e-300)
        settled = abs(l2 - lhs) <= rel_tol * scale and abs(r2 - rhs) <= rel_tol * scale
        lhs, rhs = l2, r2
        if settled:
            break
    else:
        raise NonConvergenceError("2D inequality integrals did not settle", (lhs, rhs))
    if rhs <= 1e-14 * max(1.0, abs(lhs)):
        return lhs, rhs, math.inf
    return lhs, rhs, lhs / rhs


def counterexample_scan(A_values=(0.0, 1.0, 10.0, 100.0), eps_values=(0.01,),
                        grid: SphereGrid2D = SphereGrid2D(512)) -> dict:
    """Ratios of the 2D inequality for f = (1 + A psi) h against a kernel concentrated at pi/2."""
    out = {"A": list(map(float, A_values)), "eps": list(map(float, eps_values)), "ratio": {},
           "lhs": {}, "rhs": {}}
    for eps in eps_values:
        kernel = ConcentratedKernel(2, eps)
        rows = [inequality_2d_ratio(kernel, counterexample_function(A), grid) for A in A_values]
        key = repr(float(eps))
        out["lhs"][key] = [r[0] for r in rows]
        out["rhs"][key] = [r[1] for r in rows]
        out["ratio"][key] = [r[2] for r in rows]
    return out


def dirac_lhs(A: float, grid: SphereGrid2D = SphereGrid2D(1024)) -> float:
    """lhs for the point-mass kernel at h = pi/2: int f(theta) (g'(theta+pi/2) - g'(theta))^2."""
    f = counterexample_function(A)
    t = grid.nodes
    return float(np.sum(grid.weights * f(t) * (f.dlog(t + math.pi / 2) - f.dlog(t)) ** 2))


def check_counterexample(eps: float = 0.01, A_values=(0.0, 1.0, 10.0, 100.0),
                         factor: float = 10.0) -> CheckReport:
    """Ratios along A must decrease; the drop from A = 1 to A = 100 is reported against `factor`.

    Passing means the decreasing sequence; whether the drop reaches `factor`
    is recorded in details["meets_factor"], since the size of the drop at a
    fixed width depends on the mollification, not on any inequality.
    """
    scan = counterexample_scan(A_values, (eps,))
    ratios = scan["ratio"][repr(float(eps))]
    i1, i100 = list(A_values).index(1.0), list(A_values).index(100.0)
    drop = ratios[i1] / ratios[i100]
    decreasing = all(b <= a for a, b in zip(ratios, ratios[1:]))
    dirac = [dirac_lhs(A) for A in (1.0, 100.0)]
    return CheckReport("counterexample", len(A_values), float(min(ratios)), drop - factor,
                       decreasing,
                       {"eps": eps, "A": list(A_values), "ratio": ratios, "drop_1_to_100": drop,
                        "factor": factor, "meets_factor": drop >= factor,
                        "decreasing": decreasing, "dirac_lhs": dirac})


def check_inequality_2d(kernel, bound: float, draws: int = 200, seed: int = 0,
                        kind: str = "exp-trig-poly", tol: float = 1e-3) -> CheckReport:
    """Every sampled ratio must be at least bound - tol."""
    fam = TestFunctionFamily(kind, 2, seed)
    ratios = np.array([inequality_2d_ratio(kernel, f)[2] for f in fam.draws(draws)])
    worst = float(ratios.min())
    return CheckReport("inequality2d", draws, worst, worst - bound, worst >= bound - tol,
                       {"kernel": kernel.family, "bound": bound, "seed": seed, "kind": kind})


# ---------------------------------------------------------------------------
# Gamma^2 on S^2
# ---------------------------------------------------------------------------

def gamma2_T(func, sigma, kernel, grid: SphereGridS2 = SphereGridS2(32, 64)):
    """1/2 int |grad g(s') - grad g(s)|^2_{s',s} b(s'.s) ds' with g = log f.

    The quadrature grid is centred on sigma, so kernels peaked at sigma are
    resolved by the polar Gauss rule.
    """
    pts, w = grid.points(sigma)
    x = func.grad_log(sigma)
    y = func.grad_log(pts)
    metric = G.nonlocal_metric(pts, sigma[None, :], x[None, :], y)
    return 0.5 * float(np.sum(w * kernel.at_cosine(pts @ sigma) * metric))


def gamma2_fields(func, sigma, kernel, grid: SphereGridS2 = SphereGridS2(32, 64)):
    """1/2 sum_i int (b_i(s').grad g(s') - b_i(s).grad g(s))^2 b(s'.s) ds' on a fixed grid."""
    pts, w = grid.points()
    d = pts.shape[1]
    here = np.einsum("ki,i->k", G.field_values(d, sigma), func.grad_log(sigma))
    there = np.einsum("kni,ni->kn", G.field_values(d, pts), func.grad_log(pts))
    sq = np.sum((there - here[:, None]) ** 2, axis=0)
    return 0.5 * float(np.sum(w * kernel.at_cosine(pts @ sigma) * sq))


def gamma2_equivalence(func, points, kernel, grid_T: SphereGridS2 = SphereGridS2(32, 64),
                       grid_fields: SphereGridS2 = SphereGridS2(32, 64)) -> dict:
    """Both Gamma^2 formulas at each point, their max relative discrepancy and min value."""
    points = np.asarray(points, dtype=float)
    t = np.array([gamma2_T(func, p, kernel, grid_T) for p in points])
    v = np.array([gamma2_fields(func, p, kernel, grid_fields) for p in points])
    scale = np.maximum(np.abs(t), 1e-300)
    disc = np.where((t == 0) & (v == 0), 0.0, np.abs(t - v) / scale)
    return {"max_rel_discrepancy": float(disc.max()), "T": t.tolist(), "fields": v.tolist(),
            "min_value": float(min(t.min(), v.min()))}


def check_gamma2(t_values=(0.5, 1.0), n_points: int = 20, seed: int = 0, amplitude=0.3,
                 tol: float = 1e-4) -> CheckReport:
    """Two Gamma^2 formulas agree for heat kernels, are >= 0 and obey the pointwise curvature bound."""
    from .spectral import HeatKernel

    rng = np.random.default_rng(seed)
    pts = G.random_unit(rng, 3, n_points)
    func = zonal_test_function(amplitude)
    worst, curv_margin, details = 0.0, math.inf, {}
    for t in t_values:
        kernel = HeatKernel(t, 3)
        res = gamma2_equivalence(func, pts, kernel)
        cK = cK_curvature(kernel)
        grad2 = np.sum(func.grad_log(pts) ** 2, axis=-1)
        slack = np.array(res["T"]) - cK * grad2
        curv_margin = min(curv_margin, float(slack.min()))
        worst = max(worst, res["max_rel_discrepancy"])
        details[repr(float(t))] = {"max_rel_discrepancy": res["max_rel_discrepancy"],
                                   "min_gamma2": res["min_value"], "c_K": cK,
                                   "min_curvature_slack": float(slack.min())}
    ok = worst < tol and curv_margin >= -1e-10
    return CheckReport("gamma2", n_points * len(t_values), worst, tol - worst, ok,
                       {"seed": seed, "per_t": details, "min_curvature_slack": curv_margin})


def _s2_pair_data(func, kernel, grid):
    pts, w = grid.points()
    fv = func(pts)
    g = func.grad_log(pts)
    B = kernel.at_cosine(np.clip(pts @ pts.T, -1.0, 1.0))
    return pts, w, fv, g, B


def _gamma2_on_grid(pts, w, g, B):
    # Gamma^2(log f) at every node: |x|^2 + |y|^2 - 2 x.P(y), with x tangent at s and y at s'
    # x.P_{s',s}(y) = (s'.s)(x.y) - (s.y)(x.s')
    C = pts @ pts.T
    XY = g @ g.T
    SY = pts @ g.T          # SY[i, j] = s_i . y_j
    XS = g @ pts.T          # XS[i, j] = x_i . s'_j
    nx = np.sum(g * g, axis=1)
    metric = nx[:, None] + nx[None, :] - 2.0 * (C * XY - SY * XS)
    return 0.5 * (B * metric) @ w


def fisher_dissipation_s2(func, kernel, grid: SphereGridS2 = SphereGridS2()):
    """(int f Gamma^2(log f), int |grad f|^2/f) on S^2."""
    pts, w, fv, g, B = _s2_pair_data(func, kernel, grid)
    gam = _gamma2_on_grid(pts, w, g, B)
    return float(np.sum(w * fv * gam)), float(np.sum(w * fv * np.sum(g * g, axis=1)))


def _default_cK(kernel, d):
    fam = kernel.family
    if fam == "constant":
        return kernel.params.get("value", 1.0) * surface_area(d - 1) / 2
    if fam == "heat":
        return -math.expm1(-2 * float(lambda_local(d)) * kernel.t) / 2
    return cK_curvature(kernel, d)


def check_dtofisher_s2(kernel, draws: int = 50, seed: int = 0, c_K: Optional[float] = None,
                       inflation: float = 1.0, grid: SphereGridS2 = SphereGridS2(),
                       slack: float = 1e-8) -> CheckReport:
    """int f Gamma^2(log f) >= inflation * c_K * int |grad f|^2 / f on every draw.

    c_K defaults to the curvature constant.  With inflation > 1 the check is
    a sharpness probe and the failures are the interesting output.
    """
    cK = (cK_curvature(kernel, 3) if c_K is None else c_K) * inflation
    fam = TestFunctionFamily("exp-trig-poly", 3, seed)
    ratios, failures, worst = [], 0, math.inf
    for f in fam.draws(draws):
        lhs, fisher = fisher_dissipation_s2(f, kernel, grid)
        margin = (lhs - cK * fisher) / fisher
        ratios.append(lhs / fisher)
        worst = min(worst, margin)
        failures += margin < -slack
    return CheckReport("dtofisher", draws, worst, worst, failures == 0,
                       {"c_K": cK, "inflation": inflation, "failures": failures, "seed": seed,
                        "min_ratio": float(min(ratios))})


def _circle_pairs(kernel, n):
    # full circle [0, 2 pi); pi-periodic test functions are even on S^1
    alpha = np.arange(n) * (2 * math.pi / n)
    w = np.full(n, 2 * math.pi / n)
    dev = np.abs(alpha[:, None] - alpha[None, :])
    dev = np.minimum(dev, 2 * math.pi - dev)
    return alpha, w, kernel(dev)


def log_sobolev_sides(kernel, func, d: int, n: int = 256, grid: SphereGridS2 = SphereGridS2()):
    """(I_B(f), entropy) with I_B = 1/2 iint (f' - f) log(f'/f) b and the relative entropy."""
    if d == 2:
        pts, w, B = _circle_pairs(kernel, n)
        fv = func(pts)
    elif d == 3:
        pts, w = grid.points()
        fv = func(pts)
        B = kernel.at_cosine(np.clip(pts @ pts.T, -1.0, 1.0))
    else:
        raise ValueError("log-Sobolev check implemented for d = 2 and d = 3")
    lf = np.log(fv)
    pair = (fv[None, :] - fv[:, None]) * (lf[None, :] - lf[:, None])
    info = 0.5 * float(w @ (pair * B) @ w)
    mass = float(w @ fv)
    ent = float(w @ (fv * lf)) - mass * math.log(mass / surface_area(d - 1))
    return info, ent


def check_log_sobolev(kernel, draws: int = 50, d: Optional[int] = None, seed: int = 0,
                      c_K: Optional[float] = None) -> CheckReport:
    """I_B(f) >= 2 c_K (int f log f - (int f) log(avg f)) on every draw."""
    d = kernel.d if d is None else d
    cK = _default_cK(kernel, d) if c_K is None else c_K
    fam = TestFunctionFamily("exp-trig-poly", d, seed)
    worst, failures = math.inf, 0
    for f in fam.draws(draws):
        info, ent = log_sobolev_sides(kernel, f, d)
        margin = (info - 2 * cK * ent) / max(info, 1e-300)
        worst = min(worst, margin)
        failures += margin < -1e-8
    return CheckReport("logsobolev", draws, worst, worst, failures == 0,
                       {"c_K": cK, "d": d, "failures": failures, "seed": seed})


def inequality_s2_sides(kernel, func, grid: SphereGridS2 = SphereGridS2()):
    """(int f Gamma^2(log f), iint (f'-f)^2/(f'+f) b) on S^2."""
    pts, w, fv, g, B = _s2_pair_data(func, kernel, grid)
    lhs = float(np.sum(w * fv * _gamma2_on_grid(pts, w, g, B)))
    rhs = float(w @ (B * (fv[None, :] - fv[:, None]) ** 2 / (fv[None, :] + fv[:, None])) @ w)
    return lhs, rhs


def empirical_lambda_upper(kernel, d: Optional[int] = None, trials: int = 50, seed: int = 0,
                           kind: str = "exp-trig-poly") -> float:
    """Smallest sampled ratio of the spherical inequality; an upper bound for Lambda_b."""
    d = kernel.d if d is None else d
    fam = TestFunctionFamily(kind, d, seed)
    if d == 2:
        return min(inequality_2d_ratio(kernel, f)[2] for f in fam.draws(trials))
    if d == 3:
        best = math.inf
        for f in fam.draws(trials):
            lhs, rhs = inequality_s2_sides(kernel, f)
            best = min(best, lhs / rhs)
        return best
    raise ValueError("empirical bounds implemented for d = 2 and d = 3")
