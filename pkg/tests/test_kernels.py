import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from fisherlab.kernels import (ClosedFormKernel, ConcentratedKernel, DivergenceError,
                               PowerLawPotential, closest_approach, constant_kernel,
                               deviation_angle, export_kernel_csv, hard_sphere_kernel,
                               import_kernel_csv, momentum_transfer, power_law_kernel,
                               rutherford_kernel, symmetrize)
from fisherlab.numerics import surface_area


def coulomb():
    return PowerLawPotential(2, 3)


def deviation_by_midpoints(p, n=400_000):
    # q=5, psi0=1/4: turning point solves r^4 - p^2 r^2 - 1 = 0
    r0 = math.sqrt((p * p + math.sqrt(p ** 4 + 4)) / 2)
    a = p / r0
    v = (np.arange(n) + 0.5) / n
    u = 1 - v * v
    g = 1 - a * a * u * u - u ** 4 / r0 ** 4
    integral = np.sum(2 * v / np.sqrt(g)) / n
    return math.pi - 2 * a * integral


def mt_by_quad(func, d):
    val = quad(lambda c: (1 - c * c) ** ((d - 1) / 2) * func(math.acos(c)), -1, 1,
               epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    return surface_area(d - 2) * val


# --- potential ---------------------------------------------------------------

def test_potential_exponents_exact():
    pot = PowerLawPotential("7/3", 3)
    assert pot.gamma == Fraction(-2)
    assert pot.two_s == Fraction(3, 2)
    assert PowerLawPotential(5, 3).gamma == 0


def test_potential_rejects_small_q():
    with pytest.raises(ValueError, match="at least"):
        PowerLawPotential(1, 3)
    with pytest.raises(ValueError):
        PowerLawPotential("1.9", 3)


def test_borderline_q_is_accepted():
    assert PowerLawPotential(2, 3).nu == 4.0
    assert PowerLawPotential("1.5", 2).nu == 3.0


# --- closest approach --------------------------------------------------------

def test_head_on_closest_approach():
    assert closest_approach(coulomb(), 0.0) == pytest.approx(1.0, rel=1e-12)


def test_quartic_turning_point():
    # q=5: r^4 - r^2 - 1 = 0 at p=1
    pot = PowerLawPotential(5, 3)
    assert closest_approach(pot, 1.0) == pytest.approx(math.sqrt((1 + math.sqrt(5)) / 2), rel=1e-12)


def test_q3_turning_point():
    # q=3: 1 - 2/r^2 = 0 at p=1
    assert closest_approach(PowerLawPotential(3, 3), 1.0) == pytest.approx(math.sqrt(2), rel=1e-12)


def test_large_impact_parameter_grazes():
    r0 = closest_approach(PowerLawPotential(3, 3), 1e6)
    assert r0 / 1e6 == pytest.approx(1.0, abs=1e-11)


def test_closest_approach_rejects_negative():
    with pytest.raises(ValueError):
        closest_approach(coulomb(), -1.0)


# --- deviation angle ---------------------------------------------------------

def test_head_on_reverses():
    assert deviation_angle(PowerLawPotential(3, 3), 0.0) == pytest.approx(math.pi, abs=1e-12)


def test_coulomb_closed_form():
    p = np.geomspace(1e-3, 100, 60)
    theta = deviation_angle(coulomb(), p)
    assert np.allclose(np.sin(theta / 2), (1 + 4 * p * p) ** -0.5, rtol=0, atol=1e-8)


def test_coulomb_sixty_degrees():
    assert deviation_angle(coulomb(), math.sqrt(3) / 2) == pytest.approx(math.pi / 3, abs=1e-10)


def test_q5_against_midpoint_sum():
    assert deviation_angle(PowerLawPotential(5, 3), 5.0) == pytest.approx(
        deviation_by_midpoints(5.0), abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 50.0), st.floats(0.01, 50.0))
def test_deviation_decreasing(p1, p2):
    pot = PowerLawPotential(3, 3)
    if abs(p1 - p2) < 1e-6:
        return
    lo, hi = sorted((p1, p2))
    assert deviation_angle(pot, lo) > deviation_angle(pot, hi)


# --- deviation table and b_col -----------------------------------------------

def test_coulomb_table_inverts_closed_form():
    k = power_law_kernel(coulomb())
    theta = np.linspace(0.01, 3.1, 50)
    assert np.allclose(k.table.p_of_theta(theta), 0.5 / np.tan(theta / 2), rtol=1e-7)


@pytest.mark.parametrize("q", ["2.01", "7/3", "3", "5", "10"])
def test_table_monotone(q):
    k = power_law_kernel(PowerLawPotential(q, 3))
    t = k.table
    assert np.all(np.diff(t.p_grid) > 0)
    assert np.all(np.diff(t.theta) < 0)
    assert t.theta.max() >= t.theta_hi * (1 - 1e-6)
    assert t.theta.min() <= t.theta_lo * (1 + 1e-4)
    theta = np.geomspace(1e-3, 3.1, 200)
    assert np.all(k(theta) > 0)


@pytest.mark.parametrize("q", ["7/3", "5"])
def test_table_midpoints_match_orbit(q):
    pot = PowerLawPotential(q, 3)
    t = power_law_kernel(pot).table
    mid = np.sqrt(t.theta[:-1] * t.theta[1:])[::37]
    assert np.allclose(deviation_angle(pot, t.p_of_theta(mid)), mid, rtol=1e-7)


def test_coulomb_b_col():
    k = power_law_kernel(coulomb())
    theta = np.linspace(0.05, math.pi - 0.05, 101)
    assert np.allclose(k(theta) * 16 * np.sin(theta / 2) ** 4, 1.0, rtol=1e-4)


def test_coulomb_limit_constant():
    pot = coulomb()
    assert pot.limit_constant() == pytest.approx(1.0, rel=1e-12)
    k = power_law_kernel(pot)
    assert k(np.array([1e-3]))[0] * 1e-12 == pytest.approx(1.0, rel=1e-5)


@pytest.mark.parametrize("q", ["7/3", "3", "5"])
def test_asymptote_within_two_percent(q):
    pot = PowerLawPotential(q, 3)
    k = power_law_kernel(pot)
    theta = 2.0 ** -10
    assert k(np.array([theta]))[0] * theta ** pot.nu == pytest.approx(pot.limit_constant(), rel=0.02)


def test_large_q_approaches_hard_spheres():
    # radius-1 hard spheres scatter with b = 1/4 in three dimensions
    theta = np.linspace(math.pi / 4, 3 * math.pi / 4, 41)
    spread = []
    for q in (40, 100, 200):
        v = power_law_kernel(PowerLawPotential(q, 3))(theta)
        spread.append(np.max(np.abs(v / 0.25 - 1)))
    assert spread[0] > spread[1] > spread[2]
    assert spread[2] < 0.07


# --- closed-form kernels -----------------------------------------------------

def test_rutherford_values():
    assert rutherford_kernel(3)(np.array([math.pi]))[0] == pytest.approx(1.0)
    assert rutherford_kernel(3)(np.array([math.pi / 2]))[0] == pytest.approx(4.0)
    assert rutherford_kernel(2).singularity == (2.0, 4.0)


def test_hard_sphere_values():
    theta = np.linspace(0.1, 3.0, 11)
    assert np.allclose(hard_sphere_kernel(3)(theta), 1.0)
    assert hard_sphere_kernel(5)(np.array([math.pi / 3]))[0] == pytest.approx(4.0)
    sym = symmetrize(hard_sphere_kernel(2))(np.linspace(1e-6, math.pi / 2, 201))
    assert sym.min() >= 1 - 1e-9 and sym.max() <= math.sqrt(2) + 1e-12
    assert symmetrize(hard_sphere_kernel(2))(np.array([math.pi / 2]))[0] == pytest.approx(math.sqrt(2))


def test_symmetrized_is_even():
    sym = symmetrize(power_law_kernel(PowerLawPotential(3, 3)))
    c = np.linspace(-0.95, 0.95, 39)
    assert np.allclose(sym.at_cosine(c), sym.at_cosine(-c), rtol=1e-12)


def test_concentrated_kernel_unit_mass():
    k = ConcentratedKernel(eps=0.01)
    mass = quad(lambda t: float(k(np.array([t]))[0]), math.pi / 2 - 0.01, math.pi / 2 + 0.01,
                epsabs=1e-13)[0]
    assert mass == pytest.approx(1.0, rel=1e-9)
    assert k(np.array([1.0]))[0] == 0.0
    with pytest.raises(ValueError):
        ConcentratedKernel(eps=2.0)


# --- momentum transfer -------------------------------------------------------

def test_momentum_transfer_constant():
    assert momentum_transfer(constant_kernel(3)) == pytest.approx(8 * math.pi / 3, rel=1e-12)


@pytest.mark.parametrize("d", [2, 4, 5])
def test_momentum_transfer_hard_sphere_by_quad(d):
    k = hard_sphere_kernel(d)
    oracle = mt_by_quad(lambda t: math.sin(t / 2) ** (3 - d), d)
    assert momentum_transfer(k) == pytest.approx(oracle, rel=1e-9)


def test_rutherford_momentum_transfer_diverges():
    with pytest.raises(DivergenceError):
        momentum_transfer(rutherford_kernel(3))


def test_momentum_transfer_power_law_stable():
    pot = PowerLawPotential("7/3", 3)
    a = momentum_transfer(power_law_kernel(pot, theta_min=1e-3))
    b = momentum_transfer(power_law_kernel(pot, theta_min=3e-4))
    assert a > 0 and a == pytest.approx(b, rel=1e-4)


def test_momentum_transfer_of_symmetrized():
    base = hard_sphere_kernel(2)
    sym = symmetrize(base)
    k = ClosedFormKernel("sym", 2, sym)
    assert momentum_transfer(k) == pytest.approx(2 * momentum_transfer(base), rel=1e-12)


# --- CSV ---------------------------------------------------------------------

def test_csv_round_trip():
    k = power_law_kernel(PowerLawPotential(3, 3))
    theta = np.geomspace(1e-2, 3.0, 512)
    buf = io.StringIO()
    text = export_kernel_csv(k, theta, buf, extra_header=["seed=none"])
    assert buf.getvalue() == text and "\r" not in text
    back = import_kernel_csv(text)
    assert back.d == 3 and back.nu == pytest.approx(k.nu)
    assert np.allclose(back(theta), k(theta), rtol=1e-15)
    assert np.allclose(back(theta[:-1] * 1.01), k(theta[:-1] * 1.01), rtol=1e-3)


def test_csv_requires_header():
    with pytest.raises(ValueError):
        import_kernel_csv("theta,b_value\n1.0,2.0\n")
