import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fisherlab.constants import (RouteValue, best_lambda, cK_curvature, cK_subordinate, cP_general,
                                 cP_subordinate, kernel_report, lambda_assemble, lambda_curvature,
                                 lambda_hard_sphere, lambda_local, lambda_subordinate,
                                 monotonicity_verdict, subordinate_report)
from fisherlab.kernels import (PowerLawPotential, constant_kernel, hard_sphere_kernel,
                               power_law_kernel)
from fisherlab.numerics import DomainError
from fisherlab.spectral import HeatKernel, WeightFunction, heat_kernel, subordinate_kernel


def test_lambda_local_values():
    assert lambda_local(3) == Fraction(11, 2)
    assert lambda_local(2) == 4
    assert float(lambda_local(10)) == pytest.approx(12.888888888888889, rel=1e-15)


@pytest.mark.parametrize("d", range(2, 30))
def test_lambda_local_exceeds_dimension(d):
    assert lambda_local(d) > d


def test_lambda_local_domain():
    with pytest.raises(DomainError):
        lambda_local(1)


# --- curvature and momentum routes -------------------------------------------

def test_cK_curvature_constant_kernel():
    assert cK_curvature(constant_kernel(3)) == pytest.approx(2 * math.pi / 3, rel=1e-12)


def test_cK_curvature_rejects_2d():
    with pytest.raises(DomainError):
        cK_curvature(constant_kernel(2))


def test_cK_curvature_heat_monte_carlo():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((400_000, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    c = x[:, 0]
    h, _ = heat_kernel(1.0, c, 3)
    mc = 0.25 * 4 * math.pi * np.mean((1 - c * c) * h)
    assert cK_curvature(HeatKernel(1.0, 3)) == pytest.approx(mc, rel=0.01)


def test_cP_constant_both_routes():
    k = constant_kernel(3)
    assert cP_general(k) == pytest.approx(4 * math.pi / 3, rel=1e-12)
    assert cP_general(k, route="spectral") == pytest.approx(4 * math.pi / 3, rel=1e-12)


@pytest.mark.parametrize("d", [2, 3, 4])
@pytest.mark.parametrize("t", [0.2, 1.0])
def test_cP_heat(d, t):
    assert cP_general(HeatKernel(t, d)) == pytest.approx(-math.expm1(-2 * d * t) / d, rel=1e-8)


def route_kernels():
    ks = [constant_kernel(2), constant_kernel(3)]
    for d in (2, 3):
        ks += [HeatKernel(0.2, d), HeatKernel(1.0, d)]
        ks += [subordinate_kernel(WeightFunction.fractional(s), d) for s in (0.25, 0.5, 0.9)]
    return ks


@pytest.mark.parametrize("kernel", route_kernels(),
                         ids=lambda k: f"{k.family}-d{k.d}-{k.params.get('t', k.params.get('s', ''))}")
def test_cP_routes_agree(kernel):
    a, ea = cP_general(kernel, with_error=True)
    b, eb = cP_general(kernel, route="spectral", with_error=True)
    assert a == pytest.approx(b, rel=1e-4, abs=ea + eb)


def test_cP_unknown_route():
    with pytest.raises(ValueError):
        cP_general(constant_kernel(3), route="guess")


@pytest.mark.parametrize("d", [3, 4, 5])
def test_curvature_route_gives_d_minus_2(d):
    kernels = [constant_kernel(d), hard_sphere_kernel(d), HeatKernel(0.5, d)]
    if d == 3:
        kernels.append(power_law_kernel(PowerLawPotential("7/3", 3)))
    for k in kernels:
        assert lambda_curvature(k) == pytest.approx(d - 2, abs=1e-12)


# --- subordinate route -------------------------------------------------------

@pytest.mark.parametrize("d", [2, 3, 4])
@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_fractional_closed_forms(d, s):
    w = WeightFunction.fractional(s)
    loc = float(lambda_local(d))
    assert cK_subordinate(w, d) == pytest.approx(loc ** s / 2 ** (1 - s), rel=1e-6)
    assert cP_subordinate(w, d) == pytest.approx(2 ** s / d ** (1 - s), rel=1e-6)
    assert lambda_subordinate(w, d) == pytest.approx(loc ** s * d ** (1 - s), rel=1e-6)


def test_fractional_numbers():
    assert cK_subordinate(WeightFunction.fractional(0.5), 3) == pytest.approx(
        math.sqrt(5.5) / math.sqrt(2), rel=1e-9)
    assert cK_subordinate(WeightFunction.fractional(0.5), 3) == pytest.approx(1.658, abs=5e-4)
    assert cP_subordinate(WeightFunction.fractional(0.5), 2) == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("make", [WeightFunction.fractional, WeightFunction.guess3d,
                                  WeightFunction.guess2d])
@pytest.mark.parametrize("s", [0.1, 0.5, 0.95])
def test_weight_integrals_match_transform(make, s):
    # the quadrature route against the closed-form Laplace-type transform
    w = make(s)
    d = 3
    loc = float(lambda_local(d))
    assert cK_subordinate(w, d) == pytest.approx(0.5 * float(w.transform(2 * loc)), rel=1e-9)
    assert cP_subordinate(w, d) == pytest.approx(float(w.transform(2 * d)) / d, rel=1e-9)


@pytest.mark.parametrize("t0", [0.1, 0.5, 2.0])
def test_narrow_bump_limits(t0):
    w = WeightFunction.narrow_bump(t0)
    d = 3
    assert cK_subordinate(w, d) == pytest.approx(-0.5 * math.expm1(-2 * 5.5 * t0), rel=1e-5)
    assert cP_subordinate(w, d) == pytest.approx(-math.expm1(-2 * d * t0) / d, rel=1e-5)


def test_narrow_bump_tends_to_hard_spheres():
    assert lambda_subordinate(WeightFunction.narrow_bump(50.0), 3) == pytest.approx(3, abs=1e-3)


@pytest.mark.parametrize("d", [2, 3, 5])
@pytest.mark.parametrize("s", [0.05, 0.3, 0.6, 0.9])
def test_subordinate_exceeds_dimension(d, s):
    for w in (WeightFunction.fractional(s), WeightFunction.guess3d(s), WeightFunction.guess2d(s)):
        assert lambda_subordinate(w, d) > d + 1e-6


def test_hard_sphere_lambda():
    assert lambda_hard_sphere(3) == 3
    assert lambda_hard_sphere(2) == 2
    assert 2 * math.sqrt(lambda_hard_sphere(3)) == pytest.approx(3.4641016, rel=1e-7)


def test_assemble():
    assert lambda_assemble(1.0, 0.5) == 4.0
    with pytest.raises(ValueError):
        lambda_assemble(1.0, 0.0)


# --- verdict and reports -----------------------------------------------------

def test_verdict_table_row():
    v = monotonicity_verdict(Fraction(-2), 4.75)
    assert v.passed and v.threshold == pytest.approx(4.36, abs=5e-3)
    assert v.margin == pytest.approx(v.threshold - 2)


def test_verdict_maxwellian_edge():
    v = monotonicity_verdict(0, 0.0)
    assert v.passed and v.margin == 0.0


def test_verdict_fails_outside():
    v = monotonicity_verdict(-5, 4.0)
    assert not v.passed and v.margin == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        monotonicity_verdict(0, -1.0)


@given(st.floats(-10, 10), st.floats(0, 50))
def test_verdict_rule(gamma, lam):
    v = monotonicity_verdict(gamma, lam)
    assert v.passed == (abs(gamma) <= 2 * math.sqrt(lam))
    assert v.to_dict()["pass"] == v.passed


def test_best_lambda_takes_largest_certified():
    routes = [RouteValue("curvature", 1.0), RouteValue("comparison", 4.0, 0.5),
              RouteValue("subordinate", 3.8, 0.1)]
    assert best_lambda(routes).route == "subordinate"
    with pytest.raises(ValueError):
        best_lambda([None])


def test_subordinate_report_json():
    rep = subordinate_report(WeightFunction.fractional(0.5), 3)
    data = json.loads(rep.to_json())
    assert data["c_K"]["route"] == "subordinate"
    assert data["lambda_best"]["value"] == pytest.approx(math.sqrt(5.5 * 3), rel=1e-6)
    assert data["lambda_certified"] <= data["lambda_best"]["value"]
    assert data["lambda_best"]["error"] < 1e-8


def test_kernel_report_routes():
    rep = kernel_report(constant_kernel(3))
    routes = {r.route: r.value for r in rep.lambda_routes}
    assert routes["curvature"] == pytest.approx(1.0, abs=1e-12)
    assert routes["hard-sphere"] == 3.0
    assert rep.best.route == "hard-sphere"
    assert kernel_report(constant_kernel(2)).c_K is None
