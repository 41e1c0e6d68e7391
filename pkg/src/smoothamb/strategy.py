"""Equilibrium strategy, its hedging decomposition and analytic verification checks.

All functions work on an :class:`~smoothamb.odes.OdeSolution`; the coefficient
functions between grid nodes come from its Hermite interpolant and their time
derivatives from the ODE right-hand side.

Sign convention: ``pde_residual`` returns the generator of the inside value
``g^z`` divided by ``|g^z|``, so a negative residual means ``g^z`` drifts down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import ParameterError
from .model import (
    MarketParams,
    Preferences,
    is_zero_alpha,
    log_gaussian_exp_moment,
    tilted_gaussian,
)
from .odes import OdeSolution, _a1_a2, zeta


class Feedback(Protocol):
    """Dollar amount in the stock as a function of (t, wealth, posterior mean)."""

    def __call__(self, t: float, x: np.ndarray, beta: np.ndarray) -> np.ndarray: ...


def _discount(t, market: MarketParams):
    return np.exp(-market.r * (market.T - np.asarray(t, dtype=float)))


def _state(t, sol: OdeSolution):
    m = sol.at(t)
    z = zeta(t, sol.market, sol.prior)
    a1, a2 = _a1_a2(z, m[1], m[2], sol.alpha)
    return m, z, a1, a2


def equilibrium_coefficient(t, sol: OdeSolution, market: MarketParams, prefs: Preferences):
    """c(t) with pi*(t, x, beta) = c(t) (beta - r)."""
    m, z, a1, _ = _state(t, sol)
    return _discount(t, market) / (prefs.k * market.sigma**2) * (a1 + z * m[0])


def equilibrium_pi(t, x, beta, sol: OdeSolution, market: MarketParams, prefs: Preferences):
    """Equilibrium dollar investment; affine in beta, independent of x."""
    del x
    c = equilibrium_coefficient(t, sol, market, prefs)
    out = c * (np.asarray(beta, dtype=float) - market.r)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class StrategyDecomposition:
    pi_total: float
    pi_myopic: float
    hZ: float
    hBeta: float

    @property
    def h(self) -> float:
        return self.hZ + self.hBeta


def hedging_ratios(m1, m2, m3, z, alpha: float):
    """(hZ, hBeta) from the coefficient values at one time."""
    den = 1.0 / z - alpha * m3
    hz = alpha * (m2 + m3) / den
    hb = z * ((m2 / z + alpha * m2 * m2) / den + m1)
    return hz, hb


def decompose(t: float, beta: float, sol: OdeSolution, market: MarketParams,
              prefs: Preferences) -> StrategyDecomposition:
    m, z, _, _ = _state(t, sol)
    pi_m = float(_discount(t, market) * (beta - market.r) / (prefs.k * market.sigma**2))
    hz, hb = hedging_ratios(m[0], m[1], m[2], z, sol.alpha)
    pi = equilibrium_pi(t, 0.0, beta, sol, market, prefs)
    return StrategyDecomposition(pi, pi_m, float(hz), float(hb))


@dataclass(frozen=True)
class AnsatzValue:
    g: float
    f: float


def _exponent(m, beta, z):
    m1, m2, m3, m4, m5, m6 = m
    return 0.5 * m1 * beta**2 + m2 * beta * z + 0.5 * m3 * z**2 + m4 * beta + m5 * z + m6


def g_value(t: float, x, beta, z, sol: OdeSolution, market: MarketParams,
            prefs: Preferences) -> AnsatzValue:
    """Inside expected utility -(1/k) exp(-k e^{r(T-t)} x + f^z(t, beta))."""
    m = sol.at(t)
    f = _exponent(m, beta, z)
    b = prefs.k * math.exp(market.r * (market.T - t))
    g = -np.exp(-b * np.asarray(x, dtype=float) + f) / prefs.k
    if np.ndim(g) == 0:
        return AnsatzValue(float(g), float(f))
    return AnsatzValue(g, f)


def g_array(t: float, x: np.ndarray, beta: np.ndarray, z: np.ndarray, m: np.ndarray,
            market: MarketParams, prefs: Preferences) -> np.ndarray:
    """Vectorized inside value for precomputed coefficients ``m`` at time t."""
    b = prefs.k * math.exp(market.r * (market.T - t))
    return -np.exp(-b * x + _exponent(m, beta, z)) / prefs.k


def _generator_terms(t, beta, z, pi, sol: OdeSolution, market: MarketParams,
                     prefs: Preferences) -> list:
    m = sol.at(t)
    dm = sol.derivatives_at(t)
    zt = zeta(t, sol.market, sol.prior)
    s2 = market.sigma**2
    b = prefs.k * math.exp(market.r * (market.T - t))
    fb = m[0] * beta + m[1] * z + m[3]  # d f / d beta
    return [
        0.5 * dm[0] * beta**2,
        dm[1] * beta * z,
        0.5 * dm[2] * z**2,
        dm[3] * beta,
        dm[4] * z,
        dm[5],
        -b * pi * (z - market.r),
        zt * fb * (z - beta) / s2,
        -zt * fb * b * pi,
        0.5 * b * b * s2 * pi * pi,
        0.5 * zt * zt * (m[0] + fb * fb) / s2,
    ]


@dataclass(frozen=True)
class PdeResidual:
    value: float
    scale: float

    @property
    def scaled(self) -> float:
        return self.value / self.scale


def pde_residual(t: float, x: float, beta: float, z: float, pi_value: float,
                 sol: OdeSolution, market: MarketParams, prefs: Preferences) -> PdeResidual:
    """Generator of g^z under the control pi_value, divided by |g^z|.

    ``scale`` is 1 + the sum of absolute values of the individual terms, so
    ``scaled`` is a cancellation-aware relative residual. The wealth level x
    drops out of the ratio.
    """
    del x
    if not t < market.T:
        raise ParameterError("residual is evaluated at interior times t < T")
    terms = _generator_terms(t, beta, z, pi_value, sol, market, prefs)
    q = math.fsum(float(v) for v in terms)
    return PdeResidual(-q, 1.0 + sum(abs(float(v)) for v in terms))


def _tilted_z(t, beta, sol: OdeSolution):
    """Mean and variance of Z | beta under the weight (-g^Z)^alpha."""
    m = sol.at(t)
    zt = zeta(t, sol.market, sol.prior)
    a = 0.5 * sol.alpha * m[2]
    bb = sol.alpha * (m[1] * beta + m[4])
    return m, zt, tilted_gaussian(beta, zt, a, bb)


def foc_maximizer(t: float, x: float, beta: float, sol: OdeSolution, market: MarketParams,
                  prefs: Preferences) -> float:
    """Maximizer in pi of E[phi'(g^Z) A^{Z,pi} g^Z | beta] via Gaussian moment ratios."""
    del x
    m, zt, (ratio, _) = _tilted_z(t, beta, sol)
    pi_a = ratio - beta
    pi_b = zt * m[1] * ratio + zt * (m[0] * beta + m[3])
    c = math.exp(-market.r * (market.T - t)) / (prefs.k * market.sigma**2)
    return c * ((beta - market.r) + pi_a + pi_b)


def foc_objective(t: float, beta: float, pi: float, sol: OdeSolution, market: MarketParams,
                  prefs: Preferences) -> float:
    """E'[A^{Z,pi} g^Z / |g^Z|] under Z | beta reweighted by (-g^Z)^alpha.

    Proportional (with a positive factor) to E[phi'(g^Z) A^{Z,pi} g^Z | beta];
    a concave quadratic in pi that vanishes at the equilibrium strategy.
    """
    _, _, (mu, var) = _tilted_z(t, beta, sol)
    # residual is quadratic in z; average exactly over the Gaussian with three nodes
    nodes = mu + math.sqrt(3.0 * var) * np.array([-1.0, 0.0, 1.0])
    weights = np.array([1.0, 4.0, 1.0]) / 6.0
    vals = [pde_residual(t, 0.0, beta, zz, pi, sol, market, prefs).value for zz in nodes]
    return float(np.dot(weights, vals))


def inside_optimal_pi(t, z, market: MarketParams, prefs: Preferences):
    """Full-information CARA optimum (z - r) / (k e^{r(T-t)} sigma^2)."""
    b = prefs.k * np.exp(market.r * (market.T - np.asarray(t, dtype=float)))
    out = (np.asarray(z, dtype=float) - market.r) / (b * market.sigma**2)
    return float(out) if np.ndim(out) == 0 else out


def admissibility_bound(sol: OdeSolution, market: MarketParams, prefs: Preferences) -> float:
    """Smallest C with |pi*| <= C (1 + |beta|) over the solution grid."""
    z = sol.zeta
    coef = _discount(sol.grid, market) * np.abs(sol.A1 + z * sol.m[0])
    return float(np.max(coef) * max(1.0, abs(market.r)) / (prefs.k * market.sigma**2))


def analytic_J(t: float, x: float, beta: float, sol: OdeSolution, market: MarketParams,
               prefs: Preferences) -> float:
    """E[phi(g^Z(t, x, beta)) | beta] for Z ~ Normal(beta, zeta(t)) in closed form."""
    m = sol.at(t)
    zt = zeta(t, sol.market, sol.prior)
    alpha = sol.alpha
    b = prefs.k * math.exp(market.r * (market.T - t))
    base = -b * x + 0.5 * m[0] * beta**2 + m[3] * beta + m[5]
    lin = m[1] * beta + m[4]
    if is_zero_alpha(alpha):
        ef = base + lin * beta + 0.5 * m[2] * (beta**2 + zt)
        return math.log(prefs.k) - ef
    logm = log_gaussian_exp_moment(beta, zt, 0.5 * alpha * m[2], alpha * lin)
    return -math.exp(alpha * base - alpha * math.log(prefs.k) + logm) / alpha


# --------------------------------------------------------------------------
# feedback strategies for simulation
# --------------------------------------------------------------------------


class EquilibriumFeedback:
    """pi*(t, x, beta) with the time coefficient cached per t."""

    def __init__(self, sol: OdeSolution, market: MarketParams, prefs: Preferences):
        self.sol = sol
        self.market = market
        self.prefs = prefs
        self._cache: dict[float, float] = {}

    def coefficient(self, t: float) -> float:
        c = self._cache.get(t)
        if c is None:
            c = float(equilibrium_coefficient(t, self.sol, self.market, self.prefs))
            self._cache[t] = c
        return c

    def __call__(self, t, x, beta):
        return self.coefficient(t) * (beta - self.market.r)


class ShiftedFeedback:
    def __init__(self, base: Feedback, shift: float):
        self.base = base
        self.shift = shift

    def __call__(self, t, x, beta):
        return self.base(t, x, beta) + self.shift


class ScaledFeedback:
    def __init__(self, base: Feedback, factor: float):
        self.base = base
        self.factor = factor

    def __call__(self, t, x, beta):
        return self.factor * self.base(t, x, beta)


class ZeroFeedback:
    def __call__(self, t, x, beta):
        return np.zeros_like(np.asarray(x, dtype=float))


class ConstantFeedback:
    def __init__(self, value: float):
        self.value = value

    def __call__(self, t, x, beta):
        return np.full_like(np.asarray(x, dtype=float), self.value)


class InsideOptimalFeedback:
    """Full-information optimum for a known drift z (ignores beta)."""

    def __init__(self, z: float, market: MarketParams, prefs: Preferences):
        self.z = z
        self.market = market
        self.prefs = prefs

    def __call__(self, t, x, beta):
        return np.full_like(np.asarray(x, dtype=float),
                            inside_optimal_pi(t, self.z, self.market, self.prefs))


class SpikedFeedback:
    """``perturb`` on [t0, t0 + h), ``base`` elsewhere."""

    def __init__(self, perturb: Feedback, base: Feedback, t0: float, h: float):
        self.perturb = perturb
        self.base = base
        self.t0 = t0
        self.t1 = t0 + h

    def __call__(self, t, x, beta):
        if self.t0 <= t < self.t1:
            return self.perturb(t, x, beta)
        return self.base(t, x, beta)
