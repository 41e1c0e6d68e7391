from __future__ import annotations

import functools

import pytest

from smoothamb.model import GaussianPrior, MarketParams, Preferences
from smoothamb.odes import solve_closed_form, solve_ode_numeric

SIGMA, SIGMA0, BETA0, T = 0.192, 0.121, 0.172, 2.0
R, K = 0.02, 1.0


@pytest.fixture(scope="session")
def market() -> MarketParams:
    return MarketParams(R, SIGMA, T)


@pytest.fixture(scope="session")
def prior() -> GaussianPrior:
    return GaussianPrior(BETA0, SIGMA0)


@functools.lru_cache(maxsize=None)
def closed(alpha: float, r: float = R, sigma0: float = SIGMA0, n_points: int = 1001):
    return solve_closed_form(MarketParams(r, SIGMA, T), GaussianPrior(BETA0, sigma0), alpha,
                             n_points)


@functools.lru_cache(maxsize=None)
def rk4(alpha: float, r: float = R, n_steps: int = 100_000):
    return solve_ode_numeric(MarketParams(r, SIGMA, T), GaussianPrior(BETA0, SIGMA0), alpha,
                             n_steps)


def prefs(alpha: float) -> Preferences:
    return Preferences(K, alpha)
