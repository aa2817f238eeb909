import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from fisherlab.kernels import PowerLawPotential, constant_kernel, power_law_kernel, rutherford_kernel
from fisherlab.numerics import NonConvergenceError, surface_area
from fisherlab.spectral import (HeatKernel, SpectralData, WeightFunction, apply_multipliers,
                                b_eigenvalue, harmonic_multiplicity, heat_kernel,
                                heat_kernel_matrix, laplace_eigenvalue, reconstruct_kernel,
                                subordinate_kernel)


def s2_grid(n=48):
    # Gauss in cos(theta), uniform in phi
    x, w = np.polynomial.legendre.leggauss(n)
    phi = 2 * math.pi * np.arange(2 * n) / (2 * n)
    st_ = np.sqrt(1 - x * x)
    pts = np.stack([np.outer(st_, np.cos(phi)), np.outer(st_, np.sin(phi)),
                    np.outer(x, np.ones_like(phi))], axis=-1).reshape(-1, 3)
    wts = np.outer(w, np.full(2 * n, 2 * math.pi / (2 * n))).ravel()
    return pts, wts


# --- eigenvalues and multiplicities ------------------------------------------

def test_laplace_eigenvalues():
    assert laplace_eigenvalue(0, 5) == 0
    assert laplace_eigenvalue(2, 3) == 6
    assert laplace_eigenvalue(4, 2) == 16


def test_multiplicities():
    assert harmonic_multiplicity(0, 4) == 1
    assert harmonic_multiplicity(1, 3) == 3
    assert harmonic_multiplicity(2, 3) == 5
    assert all(harmonic_multiplicity(ell, 2) == 2 for ell in range(1, 10))
    assert all(harmonic_multiplicity(ell, 4) == (ell + 1) ** 2 for ell in range(12))


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_multiplicity_branching(d):
    # restricting S^d harmonics of degree ell to S^{d-1} gives all degrees <= ell
    for ell in range(10):
        assert harmonic_multiplicity(ell, d + 1) == sum(harmonic_multiplicity(k, d)
                                                       for k in range(ell + 1))


# --- b_eigenvalue ------------------------------------------------------------

@pytest.mark.parametrize("ell", [1, 2, 5, 12])
def test_constant_kernel_multipliers(ell):
    assert b_eigenvalue(constant_kernel(3), ell) == pytest.approx(4 * math.pi, rel=1e-12)


def test_zeroth_multiplier_vanishes():
    assert b_eigenvalue(constant_kernel(3), 0) == 0.0


def test_too_singular_kernel_raises():
    with pytest.raises(NonConvergenceError):
        b_eigenvalue(rutherford_kernel(3), 2)


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
def test_heat_multipliers(d, t):
    k = HeatKernel(t, d)
    for ell in range(11):
        lam = laplace_eigenvalue(ell, d)
        assert b_eigenvalue(k, ell) == pytest.approx(-math.expm1(-lam * t), abs=1e-6)


# --- heat kernel -------------------------------------------------------------

@pytest.mark.parametrize("t", [0.05, 0.2, 1.0, 3.0])
def test_heat_mass(t):
    mass = quad(lambda c: float(heat_kernel(t, c, 3)[0]), -1, 1, epsabs=1e-13, limit=200)[0]
    assert surface_area(1) * mass == pytest.approx(1.0, abs=1e-8)


def test_heat_long_time_is_uniform():
    c = np.linspace(-1, 1, 21)
    v, _ = heat_kernel(20.0, c, 3)
    assert np.allclose(v, 1 / (4 * math.pi), rtol=1e-12)


def test_heat_truncation_guard():
    with pytest.raises(NonConvergenceError):
        heat_kernel(0.01, 0.5, 3, lmax=5)


def test_heat_semigroup():
    pts, wts = s2_grid()
    sigma = np.array([0.0, 0.0, 1.0])
    sigma2 = np.array([math.sin(1.0), 0.0, math.cos(1.0)])
    t, s = 0.3, 0.2
    conv = np.sum(heat_kernel(t, pts @ sigma, 3)[0] * heat_kernel(s, pts @ sigma2, 3)[0] * wts)
    assert conv == pytest.approx(float(heat_kernel(t + s, math.cos(1.0), 3)[0]), abs=1e-6)


@pytest.mark.parametrize("t", [0.01, 0.3, 1.9, 2.5])
def test_2d_images_match_series(t):
    theta = np.linspace(0.05, math.pi, 30)
    series, _ = heat_kernel(t, np.cos(theta), 2, lmax=200)
    assert np.allclose(heat_kernel_matrix(np.array([t]), theta, 2)[0], series, rtol=1e-9, atol=1e-12)


def test_3d_matrix_matches_series():
    theta = np.linspace(0.05, math.pi, 30)
    for t in (0.02, 0.4):
        series, _ = heat_kernel(t, np.cos(theta), 3)
        assert np.allclose(heat_kernel_matrix(np.array([t]), theta, 3)[0], series, rtol=1e-9)


# --- subordination -----------------------------------------------------------

@pytest.mark.parametrize("make", [WeightFunction.fractional, WeightFunction.guess3d,
                                  WeightFunction.guess2d])
@pytest.mark.parametrize("s", [0.25, 0.5, 0.9])
def test_transform_termwise(make, s):
    w = make(s)
    for lam in (2.0, 6.0, 110.0):
        head = quad(lambda t: float(w(t)) * -math.expm1(-lam * t), 0, 1, limit=400, epsrel=1e-12)[0]
        tail = quad(lambda t: float(w(t)) * -math.expm1(-lam * t), 1, np.inf, limit=400, epsrel=1e-12)[0]
        assert float(w.transform(lam)) == pytest.approx(head + tail, rel=1e-6)


def test_fractional_transform_is_power():
    lam = np.array([laplace_eigenvalue(ell, 3) for ell in range(1, 21)], dtype=float)
    assert np.allclose(WeightFunction.fractional(0.3).transform(lam), lam ** 0.3, rtol=1e-12)


def test_weight_validation():
    with pytest.raises(ValueError):
        WeightFunction.fractional(1.2)
    with pytest.raises(ValueError):
        WeightFunction("custom")


@pytest.mark.parametrize("s", [0.3, 0.75])
def test_weight_has_leading_power(s):
    for w in (WeightFunction.fractional(s), WeightFunction.guess3d(s), WeightFunction.guess2d(s)):
        t = 1e-8
        assert float(w(t)) * t ** (1 + s) == pytest.approx(w.leading, rel=1e-6)


@pytest.mark.parametrize("d", [2, 3])
def test_fractional_spectral_round_trip(d):
    s = 0.5
    k = subordinate_kernel(WeightFunction.fractional(s), d)
    for ell in (1, 2, 3, 5, 8, 13, 20):
        lam = laplace_eigenvalue(ell, d)
        assert b_eigenvalue(k, ell) == pytest.approx(lam ** s, rel=1e-3)


def test_half_fractional_2d_is_rutherford():
    k = subordinate_kernel(WeightFunction.fractional(0.5), 2)
    theta = np.linspace(0.05, math.pi - 0.05, 40)
    ratio = k(theta) * np.sin(theta / 2) ** 2
    assert ratio.max() / ratio.min() - 1 < 0.01


def test_guess3d_kernel_positive_decreasing():
    k = subordinate_kernel(WeightFunction.guess3d(0.75), 3)
    v = k(np.linspace(0.02, math.pi / 2, 60))
    assert np.all(v > 0) and np.all(np.diff(v) < 0)


def test_subordinate_asymptote_matches_values():
    k = subordinate_kernel(WeightFunction.fractional(0.4), 3, theta_min=1e-3)
    theta = 1e-3
    direct = float(k._evaluate(np.array([theta]))[0])
    assert direct * theta ** k.nu == pytest.approx(k.const, rel=1e-3)


def test_narrow_bump_kernel_is_heat():
    w = WeightFunction.narrow_bump(0.5)
    k = subordinate_kernel(w, 3)
    theta = np.linspace(0.2, 3.0, 8)
    assert np.allclose(k(theta), HeatKernel(0.5, 3)(theta), rtol=1e-5)


# --- multiplier invariants ---------------------------------------------------

def kernel_matrix():
    return [constant_kernel(3), constant_kernel(2), HeatKernel(0.2, 3), HeatKernel(1.0, 2),
            subordinate_kernel(WeightFunction.fractional(0.5), 3),
            power_law_kernel(PowerLawPotential("7/3", 3))]


def test_eigenvalue_ratio_bounded_by_second():
    for k in kernel_matrix():
        d = k.d
        ref = b_eigenvalue(k, 2) / laplace_eigenvalue(2, d)
        for ell in range(1, 16):
            r = b_eigenvalue(k, 2 * ell) / laplace_eigenvalue(2 * ell, d)
            assert r <= ref * (1 + 1e-9), (k, ell)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_subnormal=False), min_size=3, max_size=20))
def test_multipliers_commute(coef):
    d = 3
    n = len(coef)
    lam = np.array([laplace_eigenvalue(ell, d) for ell in range(n)], dtype=float)
    heat = -np.expm1(-0.5 * lam)
    a = apply_multipliers(-heat, apply_multipliers(-lam, coef))
    b = apply_multipliers(-lam, apply_multipliers(-heat, coef))
    assert np.allclose(a, b, rtol=1e-14, atol=0)


def test_spectral_data_csv_round_trip():
    sd = SpectralData.heat(0.5, 3, 12)
    text = sd.to_csv()
    assert text.splitlines()[0] == "ell,lambda,lambda_tilde,mult"
    back = SpectralData.from_csv(text, 3)
    assert np.array_equal(back.lambda_tilde, sd.lambda_tilde)
    assert np.array_equal(back.mult, sd.mult)
    with pytest.raises(ValueError):
        sd.lambda_tilde[1] = 0.0


def test_spectral_data_validation():
    with pytest.raises(ValueError):
        SpectralData.from_multipliers(3, [1.0, 2.0])


# --- reconstruction ----------------------------------------------------------

def test_reconstruct_heat():
    sd = SpectralData.heat(0.5, 3, 64)
    assert reconstruct_kernel(sd, 0.0) == pytest.approx(float(heat_kernel(0.5, 0.0, 3)[0]), rel=0.01)


def test_reconstruct_constant():
    sd = SpectralData.from_multipliers(3, [0.0] + [4 * math.pi] * 64)
    v = reconstruct_kernel(sd, np.linspace(-0.8, 0.8, 9))
    assert np.allclose(v, 1.0, rtol=0.01)


def test_reconstruct_fractional():
    w = WeightFunction.fractional(0.9)
    sd = SpectralData.from_weight(w, 3, 64)
    direct = float(subordinate_kernel(w, 3)(np.array([math.pi / 2]))[0])
    assert reconstruct_kernel(sd, 0.0) == pytest.approx(direct, rel=0.02)


def test_reconstruct_warns_when_under_resolved():
    sd = SpectralData.heat(0.5, 3, 64)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        reconstruct_kernel(sd, 0.0, width=1.0 / 64)
    assert any(issubclass(c.category, RuntimeWarning) for c in caught)
