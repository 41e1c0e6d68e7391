"""Posterior of the unknown drift given the observed log-price path.

Only the cumulative log-price change matters: with ``dy = Y_t - Y_0`` the
posterior weight of an atom z is proportional to

    w(z) * exp( (z / sigma**2) * (dy + sigma**2 t / 2) - z**2 t / (2 sigma**2) ).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import NumericalError, ParameterError
from .model import BeliefState, DiscretePrior, GaussianPrior, MarketParams


@dataclass(frozen=True)
class ObservationSummary:
    t: float
    dy: float
    Y0: float = 0.0

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ParameterError(f"elapsed time must be nonnegative, got {self.t}")


def _log_likelihood(z: np.ndarray, obs: ObservationSummary, sigma: float) -> np.ndarray:
    s2 = sigma * sigma
    return (z / s2) * (obs.dy + 0.5 * s2 * obs.t) - z * z * obs.t / (2.0 * s2)


def posterior_weights(
    prior: DiscretePrior, obs: ObservationSummary, sigma: float
) -> np.ndarray:
    """Normalized posterior weights of the prior atoms (log-sum-exp)."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    logw = np.log(prior.weights) + _log_likelihood(prior.atoms, obs, sigma)
    norm = logsumexp(logw)
    if not np.isfinite(norm):
        raise NumericalError("posterior weights degenerate (all exponents non-finite)")
    return np.exp(logw - norm)


def posterior_expectation(
    prior: DiscretePrior,
    obs: ObservationSummary,
    sigma: float,
    f: Callable[[np.ndarray], np.ndarray],
) -> float:
    """E[f(Z) | observations] for a discrete prior."""
    w = posterior_weights(prior, obs, sigma)
    return float(np.dot(w, f(prior.atoms)))


def varphi(prior: DiscretePrior, obs: ObservationSummary, sigma: float) -> float:
    """Posterior mean of the drift."""
    return posterior_expectation(prior, obs, sigma, lambda z: z)


def varphi_y(prior: DiscretePrior, obs: ObservationSummary, sigma: float) -> float:
    """Sensitivity of the posterior mean to the log price: posterior variance / sigma**2."""
    w = posterior_weights(prior, obs, sigma)
    m = np.dot(w, prior.atoms)
    var = np.dot(w, (prior.atoms - m) ** 2)
    return float(var / (sigma * sigma))


def gaussian_posterior(
    prior: GaussianPrior, market: MarketParams, obs: ObservationSummary
) -> BeliefState:
    """Conjugate update: Z | F_t ~ Normal(beta, zeta)."""
    s2 = market.sigma**2
    v0 = prior.sigma0**2
    zeta = s2 * v0 / (s2 + obs.t * v0)
    beta = zeta * (obs.dy / s2 + 0.5 * obs.t + prior.beta0 / v0)
    return BeliefState(t=obs.t, beta=beta, zeta=zeta)
