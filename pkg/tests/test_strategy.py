from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import BETA0, K, R, SIGMA, SIGMA0, T, closed, prefs, rk4
from smoothamb.errors import ParameterError
from smoothamb.model import GaussianPrior, MarketParams, Preferences, phi
from smoothamb.odes import coefficients_at, solve_closed_form, zeta
from smoothamb.strategy import (
    admissibility_bound,
    analytic_J,
    decompose,
    equilibrium_pi,
    foc_maximizer,
    foc_objective,
    g_value,
    hedging_ratios,
    inside_optimal_pi,
    pde_residual,
)

MK = MarketParams(R, SIGMA, T)
PR = GaussianPrior(BETA0, SIGMA0)


def test_zero_premium_gives_zero_position():
    sol = closed(1.5)
    assert equilibrium_pi(0.3, 1.0, R, sol, MK, prefs(1.5)) == 0.0


def test_terminal_strategy_is_myopic():
    sol = closed(1.5)
    assert equilibrium_pi(T, 5.0, 0.3, sol, MK, prefs(1.5)) == pytest.approx(
        (0.3 - R) / (K * SIGMA**2), rel=1e-14)


def test_affine_in_beta_and_independent_of_x():
    sol = closed(0.5)
    p = prefs(0.5)
    betas = np.linspace(-0.5, 0.5, 11)
    vals = equilibrium_pi(0.4, 0.0, betas, sol, MK, p)
    slope = (vals[-1] - vals[0]) / (betas[-1] - betas[0])
    np.testing.assert_allclose(vals, slope * (betas - R), rtol=1e-13, atol=1e-15)
    assert equilibrium_pi(0.4, -7.0, 0.2, sol, MK, p) == equilibrium_pi(0.4, 9.0, 0.2, sol, MK, p)


@pytest.mark.parametrize("alpha", [-0.3, 0.0, 0.5, 1.0, 1.5, 3.0])
def test_decomposition_identity(alpha):
    sol = closed(alpha)
    for t in np.linspace(0, T, 9):
        for beta in (-0.2, 0.1, 0.4):
            d = decompose(t, beta, sol, MK, prefs(alpha))
            assert d.pi_total == pytest.approx(d.pi_myopic * (1 + d.hZ + d.hBeta), rel=1e-12,
                                               abs=1e-14)


def test_unit_alpha_hZ_closed_vs_rk4():
    ref = rk4(1.0)
    sol = closed(1.0)
    for t in np.linspace(0, 1.9, 7):
        m_rk = ref.at(t)
        z = zeta(t, MK, PR)
        hz_rk, _ = hedging_ratios(m_rk[0], m_rk[1], m_rk[2], z, 1.0)
        assert decompose(t, BETA0, sol, MK, prefs(1.0)).hZ == pytest.approx(hz_rk, abs=1e-8)


def test_no_uncertainty_no_hedging():
    pr = GaussianPrior(BETA0, 1e-6)
    for alpha in (0.5, 1.5):
        m1, m2, m3 = coefficients_at(0.0, alpha, MK, pr)
        hz, hb = hedging_ratios(m1, m2, m3, zeta(0.0, MK, pr), alpha)
        assert abs(hz) < 1e-4 and abs(hb) < 1e-4


def test_hedging_vanishes_at_T():
    d = decompose(T, 0.2, closed(1.5), MK, prefs(1.5))
    assert d.hZ == 0.0 and d.hBeta == 0.0


def test_g_value_terminal_and_translation():
    sol = closed(1.5)
    p = prefs(1.5)
    for beta, z in ((0.0, 0.1), (0.3, -0.2)):
        assert g_value(T, 0.7, beta, z, sol, MK, p).g == pytest.approx(-math.exp(-0.7), rel=1e-15)
    g1 = g_value(0.5, 1.0, 0.1, 0.2, sol, MK, p).g
    g2 = g_value(0.5, 1.3, 0.1, 0.2, sol, MK, p).g
    assert g2 / g1 == pytest.approx(math.exp(-K * math.exp(R * (T - 0.5)) * 0.3), rel=1e-13)


def test_residual_vanishes_on_state_grid():
    for alpha in (0.5, 1.5):
        sol = closed(alpha)
        p = prefs(alpha)
        for t in np.linspace(0, 1.9, 5):
            for beta in np.linspace(-0.2, 0.5, 5):
                pi = equilibrium_pi(t, 1.0, beta, sol, MK, p)
                for z in np.linspace(-0.2, 0.5, 5):
                    res = pde_residual(t, 1.0, beta, z, pi, sol, MK, p)
                    assert abs(res.value) < 1e-8 * (1 + res.scale)


def test_residual_needs_interior_time():
    with pytest.raises(ParameterError):
        pde_residual(T, 1.0, 0.1, 0.1, 1.0, closed(1.5), MK, prefs(1.5))


def test_residual_matches_generator_by_finite_differences():
    # the generator of g^z, with the m_i taken from the RK4 grid, by central differences
    alpha, t, x, beta, z, pi = 1.5, 0.6, 1.0, 0.15, 0.25, 1.7
    sol = closed(alpha)
    p = prefs(alpha)
    s2 = SIGMA**2
    zt = zeta(t, MK, PR)

    def g(tt, xx, bb):
        return g_value(tt, xx, bb, z, sol, MK, p).g

    h = 1e-4
    gt = (g(t + h, x, beta) - g(t - h, x, beta)) / (2 * h)
    gx = (g(t, x + h, beta) - g(t, x - h, beta)) / (2 * h)
    gb = (g(t, x, beta + h) - g(t, x, beta - h)) / (2 * h)
    gxx = (g(t, x + h, beta) - 2 * g(t, x, beta) + g(t, x - h, beta)) / h**2
    gbb = (g(t, x, beta + h) - 2 * g(t, x, beta) + g(t, x, beta - h)) / h**2
    gxb = (g(t, x + h, beta + h) - g(t, x + h, beta - h) - g(t, x - h, beta + h)
           + g(t, x - h, beta - h)) / (4 * h * h)
    gen = (gt + gx * (R * x + pi * (z - R)) + gb * zt / s2 * (z - beta)
           + 0.5 * gxx * pi**2 * s2 + gxb * pi * zt + 0.5 * gbb * zt**2 / s2)
    res = pde_residual(t, x, beta, z, pi, sol, MK, p).value
    assert res == pytest.approx(gen / abs(g(t, x, beta)), rel=1e-4, abs=1e-7)


def test_corrupted_m2_breaks_residual():
    sol = closed(1.5).scaled(1, 1.01)
    p = prefs(1.5)
    pi = equilibrium_pi(0.5, 1.0, 0.1, sol, MK, p)
    assert abs(pde_residual(0.5, 1.0, 0.1, BETA0, pi, sol, MK, p).scaled) > 1e-6


@pytest.mark.parametrize("alpha", [-0.3, 0.0, 0.5, 1.0, 1.5])
def test_foc_objective_is_concave_with_peak_at_equilibrium(alpha):
    sol = closed(alpha)
    p = prefs(alpha)
    for t in (0.0, 0.8, 1.7):
        for beta in (-0.1, 0.172, 0.4):
            pi = equilibrium_pi(t, 1.0, beta, sol, MK, p)
            f0 = foc_objective(t, beta, pi, sol, MK, p)
            assert abs(f0) < 1e-12
            fp = foc_objective(t, beta, pi + 1, sol, MK, p)
            fm = foc_objective(t, beta, pi - 1, sol, MK, p)
            b = K * math.exp(R * (T - t))
            assert fp < 0 and fm < 0
            # exact parabola: -0.5 b^2 sigma^2 (pi - pi*)^2
            assert fp == pytest.approx(-0.5 * b * b * SIGMA**2, rel=1e-9)


def test_foc_maximizer_zero_rate_zero_premium():
    sol = closed(1.5, r=0.0)
    mk0 = MarketParams(0.0, SIGMA, T)
    assert foc_maximizer(0.4, 1.0, 0.0, sol, mk0, prefs(1.5)) == pytest.approx(0.0, abs=1e-15)


def test_foc_maximizer_unit_alpha():
    sol = closed(1.0)
    for t in (0.0, 1.0):
        for beta in (0.05, 0.3):
            assert foc_maximizer(t, 1.0, beta, sol, MK, prefs(1.0)) == pytest.approx(
                equilibrium_pi(t, 1.0, beta, sol, MK, prefs(1.0)), rel=1e-12)


def test_inside_optimal_benchmark():
    mk0 = MarketParams(0.0, 0.192, T)
    assert inside_optimal_pi(0.0, 0.172, mk0, Preferences(1.0, 1.0)) == pytest.approx(
        0.172 / 0.036864, rel=1e-15)
    assert inside_optimal_pi(0.5, R, MK, prefs(1.0)) == 0.0
    assert inside_optimal_pi(T, 0.3, MK, prefs(1.0)) == pytest.approx((0.3 - R) / SIGMA**2)


def test_admissibility_bound():
    sol = closed(1.5)
    c = admissibility_bound(sol, MK, prefs(1.5))
    assert math.isfinite(c)
    assert c >= max(1.0, abs(R)) / (K * SIGMA**2) * 0.999999
    for t in np.linspace(0, T, 13):
        for beta in (-3.0, -0.5, 0.0, 0.7, 4.0):
            assert abs(equilibrium_pi(t, 1.0, beta, sol, MK, prefs(1.5))) <= c * (1 + abs(beta))
    fine = solve_closed_form(MK, PR, 1.5, n_points=2001)
    assert admissibility_bound(fine, MK, prefs(1.5)) == pytest.approx(c, abs=1e-6)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.5])
def test_analytic_J_against_quadrature(alpha):
    # E[phi(g^Z)] over Z ~ N(beta, zeta) by Gauss-Hermite quadrature
    sol = closed(alpha)
    p = prefs(alpha)
    t, x, beta = 0.0, 1.0, BETA0
    zt = zeta(t, MK, PR)
    nodes, weights = np.polynomial.hermite_e.hermegauss(80)
    zs = beta + math.sqrt(zt) * nodes
    vals = [phi(g_value(t, x, beta, z, sol, MK, p).g, alpha) for z in zs]
    ref = float(np.dot(weights, vals) / math.sqrt(2 * math.pi))
    assert analytic_J(t, x, beta, sol, MK, p) == pytest.approx(ref, rel=1e-12)
