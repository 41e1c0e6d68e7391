"""Parameter types, CARA utility, power ambiguity transform and Gaussian moments.

Units: rates and volatilities are per-year decimals, time is in years.
The ambiguity transform is

    phi(u) = -(1/alpha) (-u)**alpha      alpha != 0
    phi(u) = -log(-u)                    alpha == 0

on u < 0, so alpha > 1 is ambiguity averse, alpha = 1 neutral and
alpha < 1 ambiguity seeking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from .errors import DivergentMomentError, DomainError, ParameterError

# |alpha| or |alpha - 1| below this selects the dedicated branch
BRANCH_TOL = 1e-12


def is_zero_alpha(alpha: float) -> bool:
    return abs(alpha) < BRANCH_TOL


def is_unit_alpha(alpha: float) -> bool:
    return abs(alpha - 1.0) < BRANCH_TOL


@dataclass(frozen=True)
class MarketParams:
    """Observable market constants: risk-free rate, volatility, horizon."""

    r: float
    sigma: float
    T: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.r):
            raise ParameterError(f"r must be finite, got {self.r}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ParameterError(f"T must be positive, got {self.T}")


@dataclass(frozen=True)
class GaussianPrior:
    """Normal(beta0, sigma0**2) prior on the unknown drift."""

    beta0: float
    sigma0: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.beta0):
            raise ParameterError(f"beta0 must be finite, got {self.beta0}")
        if not (self.sigma0 > 0 and math.isfinite(self.sigma0)):
            raise ParameterError(
                f"sigma0 must be positive (degenerate prior), got {self.sigma0}"
            )


@dataclass(frozen=True)
class DiscretePrior:
    """Prior with finitely many atoms ``z_i`` carrying probability ``w_i``."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        z = np.asarray(self.atoms, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if z.size == 0 or z.shape != w.shape:
            raise ParameterError("atoms and weights must be non-empty and equal length")
        if not np.all(np.isfinite(z)):
            raise ParameterError("atoms must be finite")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ParameterError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError(f"weights must sum to 1, got {w.sum()!r}")
        if np.unique(z).size != z.size:
            raise ParameterError("atoms must be distinct")
        object.__setattr__(self, "atoms", z)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_pairs(cls, pairs) -> "DiscretePrior":
        z, w = zip(*pairs)
        return cls(np.array(z, dtype=float), np.array(w, dtype=float))

    @classmethod
    def from_gaussian(
        cls, prior: GaussianPrior, n_atoms: int = 2001, width: float = 8.0
    ) -> "DiscretePrior":
        """Discretize a Gaussian prior on an equispaced grid over beta0 +- width*sigma0."""
        z = prior.beta0 + prior.sigma0 * np.linspace(-width, width, n_atoms)
        logw = -0.5 * ((z - prior.beta0) / prior.sigma0) ** 2
        w = np.exp(logw - logw.max())
        w /= w.sum()
        # renormalize once more so the 1e-12 sum invariant holds after rounding
        w /= math.fsum(w)
        return cls(z, w)

    def mean(self) -> float:
        return float(np.dot(self.weights, self.atoms))

    def variance(self) -> float:
        m = self.mean()
        return float(np.dot(self.weights, (self.atoms - m) ** 2))


@dataclass(frozen=True)
class Preferences:
    """CARA coefficient ``k`` and ambiguity power ``alpha``."""

    k: float
    alpha: float

    def __post_init__(self) -> None:
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ParameterError(f"k must be positive, got {self.k}")
        if not math.isfinite(self.alpha):
            raise ParameterError(f"alpha must be finite, got {self.alpha}")


@dataclass(frozen=True)
class BeliefState:
    """Posterior Normal(beta, zeta) of the drift at time t."""

    t: float
    beta: float
    zeta: float


def _check_k(k: float) -> None:
    if not k > 0:
        raise ParameterError(f"risk aversion k must be positive, got {k}")


def _negative_utility(u: ArrayLike) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if np.any(~(u < 0)):
        raise DomainError("phi is defined for negative utility values only")
    return u


def _out(x: np.ndarray):
    return float(x) if np.ndim(x) == 0 else x


def utility(x: ArrayLike, k: float):
    """CARA utility -(1/k) exp(-k x)."""
    _check_k(k)
    return _out(-np.exp(-k * np.asarray(x, dtype=float)) / k)


def phi(u: ArrayLike, alpha: float):
    u = _negative_utility(u)
    log_mu = np.log(-u)
    if is_zero_alpha(alpha):
        return _out(-log_mu)
    return _out(-np.exp(alpha * log_mu) / alpha)


def phi_prime(u: ArrayLike, alpha: float):
    """Derivative (-u)**(alpha - 1), always positive."""
    u = _negative_utility(u)
    return _out(np.exp((alpha - 1.0) * np.log(-u)))


def monetary_V(x: ArrayLike, k: float, alpha: float):
    """phi(U(x)) written directly in wealth units."""
    _check_k(k)
    x = np.asarray(x, dtype=float)
    if is_zero_alpha(alpha):
        return _out(k * x + math.log(k))
    return _out(-np.exp(-k * alpha * x - alpha * math.log(k)) / alpha)


def tilted_gaussian(mu: float, var: float, a: float, b: float) -> tuple[float, float]:
    """Mean and variance of Normal(mu, var) reweighted by exp(a x**2 + b x)."""
    if var < 0:
        raise ParameterError(f"variance must be nonnegative, got {var}")
    d = 1.0 - 2.0 * a * var
    if not d > 0:
        raise DivergentMomentError(
            f"E[exp(a xi^2 + b xi)] is infinite: 2*a*var = {2 * a * var} >= 1"
        )
    return (mu + b * var) / d, var / d


def log_gaussian_exp_moment(mu: float, var: float, a: float, b: float) -> float:
    """log E[exp(a xi**2 + b xi)] for xi ~ Normal(mu, var)."""
    if var < 0:
        raise ParameterError(f"variance must be nonnegative, got {var}")
    d = 1.0 - 2.0 * a * var
    if not d > 0:
        raise DivergentMomentError(
            f"E[exp(a xi^2 + b xi)] is infinite: 2*a*var = {2 * a * var} >= 1"
        )
    return -0.5 * math.log(d) + (2 * a * mu * mu + 2 * mu * b + b * b * var) / (2 * d)


def gaussian_exp_moment(mu: float, var: float, a: float, b: float) -> float:
    """E[exp(a xi**2 + b xi)] for xi ~ Normal(mu, var); requires 2 a var < 1."""
    return math.exp(log_gaussian_exp_moment(mu, var, a, b))


def gaussian_exp_first_moment(mu: float, var: float, a: float, b: float) -> float:
    """E[xi exp(a xi**2 + b xi)] for xi ~ Normal(mu, var)."""
    d = 1.0 - 2.0 * a * var
    return (mu + b * var) / d * gaussian_exp_moment(mu, var, a, b)
