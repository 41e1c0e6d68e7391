"""Coefficient functions m1..m6 of the quadratic value-function exponent.

The six functions solve a terminal-value ODE system driven by the posterior
variance ``zeta(t)``. Two independent routes are provided:

* ``solve_closed_form``: the explicit (m2, m3) solution through the special
  function Psi and its inverse, followed by quadratures for m1 and m6 and the
  linear identities for m4 and m5;
* ``solve_ode_numeric``: classical RK4 integrated backward from ``T``.

Both return an immutable :class:`OdeSolution`.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from numba import njit
from scipy.integrate import cumulative_simpson, quad
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .errors import DomainError, NumericalError, ParameterError
from .model import GaussianPrior, MarketParams, is_unit_alpha, is_zero_alpha

log = logging.getLogger(__name__)

QUAD_EPSABS = 1e-12
QUAD_EPSREL = 1e-10
ENDPOINT_GAP = 1e-12
PSI_CAP = 1e6


# --------------------------------------------------------------------------
# posterior variance and ODE coefficients
# --------------------------------------------------------------------------


def zeta(t, market: MarketParams, prior: GaussianPrior):
    """Posterior variance sigma^2 sigma0^2 / (sigma^2 + t sigma0^2)."""
    s2 = market.sigma**2
    v0 = prior.sigma0**2
    out = s2 * v0 / (s2 + np.asarray(t, dtype=float) * v0)
    return float(out) if np.ndim(out) == 0 else out


def _a1_a2(z, m2, m3, alpha):
    den = 1.0 / z - alpha * m3
    if np.any(~(np.asarray(den) > 0)):
        raise DomainError("validity domain breached: 1/zeta - alpha*m3 <= 0")
    a1 = (1.0 + z * m2) * (1.0 / z + alpha * m2) / den
    a2 = alpha * (1.0 + z * m2) / den
    return a1, a2


def coeff_a1(t, m2, m3, alpha: float, market: MarketParams, prior: GaussianPrior):
    return _a1_a2(zeta(t, market, prior), m2, m3, alpha)[0]


def coeff_a2(t, m2, m3, alpha: float, market: MarketParams, prior: GaussianPrior):
    return _a1_a2(zeta(t, market, prior), m2, m3, alpha)[1]


def ode_rhs(t, m, alpha: float, market: MarketParams, prior: GaussianPrior) -> np.ndarray:
    """Time derivatives of (m1..m6); ``m`` has shape (6, ...)."""
    m1, m2, m3, m4, m5, m6 = np.asarray(m, dtype=float)
    z = zeta(t, market, prior)
    r = market.r
    s2 = market.sigma**2
    a1, a2 = _a1_a2(z, m2, m3, alpha)
    q = 1.0 + z * m2
    return np.array(
        [
            (2 * z * m1 - a1 * a1) / s2,
            (q * a1 + z * m2) / s2,
            (-2 * z * m2 - z * z * m2 * m2) / s2,
            (z * m4 - a1 * a2 * m5 - r * z * m1) / s2,
            (q * a2 * m5 - r * q) / s2,
            (-0.5 * a2 * a2 * m5 * m5 + 0.5 * r * r - 0.5 * z * z * m1 - r * z * m4) / s2,
        ]
    )


# --------------------------------------------------------------------------
# alpha*: existence threshold of the closed form
# --------------------------------------------------------------------------


def _threshold_integrand_log(x: float, alpha: float) -> float:
    p = alpha / (1.0 - alpha)
    return -x + p * math.log1p((1.0 - alpha) * x)


def alpha_star_integral(alpha: float, method: str = "truncated") -> float:
    """Integral of exp(-x) (1 + (1-alpha) x)**(alpha/(1-alpha)) over [0, inf), alpha < 1.

    ``truncated`` integrates up to where the integrand drops below 1e-16 and adds
    an exponential tail bound; ``substitution`` maps [0, inf) to (0, 1] via u = e^-x.
    """
    if not alpha < 1:
        raise ParameterError(f"threshold integral needs alpha < 1, got {alpha}")
    a = 1.0 - alpha
    p = alpha / a
    if method == "truncated":
        x_cut = 40.0
        while _threshold_integrand_log(x_cut, alpha) > math.log(1e-16):
            x_cut *= 2.0
        val, _ = quad(
            lambda x: math.exp(_threshold_integrand_log(x, alpha)),
            0.0,
            x_cut,
            epsabs=1e-15,
            epsrel=1e-13,
            limit=400,
        )
        # for x >= X the log-integrand slope is at most -(1 - max(p a, 0)/(1 + a X))
        lam = 1.0 - max(p * a, 0.0) / (1.0 + a * x_cut)
        return val + math.exp(_threshold_integrand_log(x_cut, alpha)) / lam
    if method == "substitution":

        def f(u: float) -> float:
            if u <= 0.0:
                return 0.0 if p < 0 else math.inf
            return math.exp(p * math.log1p(-a * math.log(u)))

        val, _ = quad(f, 0.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=400)
        return val
    raise ValueError(f"unknown method {method!r}")


def alpha_star_residual(alpha: float, market: MarketParams, prior: GaussianPrior,
                        method: str = "truncated") -> float:
    c = market.sigma**2 / (prior.sigma0**2 * market.T)
    return (1.0 + c) * alpha_star_integral(alpha, method) - 1.0


@lru_cache(maxsize=256)
def _alpha_star_cached(sigma: float, sigma0: float, T: float) -> float:
    market = MarketParams(0.0, sigma, T)
    prior = GaussianPrior(0.0, sigma0)
    f = lambda a: alpha_star_residual(a, market, prior)  # noqa: E731
    lo = -1.0
    while f(lo) > 0:
        lo *= 2.0
        if lo < -1e8:
            raise NumericalError("could not bracket alpha*")
    hi = lo / 2.0 if lo < -1.0 else -1e-12
    while f(hi) < 0:  # pragma: no cover - f(0) > 0 always
        hi /= 2.0
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def alpha_star(market: MarketParams, prior: GaussianPrior) -> float:
    """Unique negative root below which the (m2, m3) closed form breaks down."""
    return _alpha_star_cached(market.sigma, prior.sigma0, market.T)


def equilibrium_alpha_bound(market: MarketParams, prior: GaussianPrior) -> float:
    """Lower bound 1 - sigma^2 / (2 sigma0^2 T) required for the equilibrium result."""
    return 1.0 - 0.5 * market.sigma**2 / (prior.sigma0**2 * market.T)


def check_equilibrium_domain(alpha: float, market: MarketParams, prior: GaussianPrior) -> None:
    """Raise DomainError unless alpha > max(alpha*, 1 - sigma^2/(2 sigma0^2 T))."""
    bound = equilibrium_alpha_bound(market, prior)
    if not alpha > bound:
        raise DomainError(
            f"alpha = {alpha} violates alpha > 1 - 0.5*sigma^2/(sigma0^2*T) = {bound:.10g}"
        )
    a_star = alpha_star(market, prior)
    if not alpha > a_star:
        raise DomainError(f"alpha = {alpha} violates alpha > alpha* = {a_star:.10g}")


def check_ode_domain(alpha: float, market: MarketParams, prior: GaussianPrior) -> None:
    if alpha < 0:
        a_star = alpha_star(market, prior)
        if not alpha > a_star:
            raise DomainError(
                f"alpha = {alpha} <= alpha* = {a_star:.10g}: no solution on [0, T]"
            )


# --------------------------------------------------------------------------
# psi, Psi, Psi^{-1}
# --------------------------------------------------------------------------


def _check_psi_alpha(alpha: float) -> None:
    if is_zero_alpha(alpha) or is_unit_alpha(alpha):
        raise ParameterError("psi/Psi are defined for alpha not in {0, 1}")


def psi_domain_end(alpha: float) -> float:
    return 1.0 / max(alpha, 1.0)


def _log_inv_psi(s: float, alpha: float) -> float:
    # log(1/psi(s)); exponents combined so the alpha -> 1 cancellation stays benign
    if s >= 1.0:
        return -math.inf
    return -s / (1.0 - s) - ((alpha - 2.0) * math.log1p(-s)
                             + alpha * math.log1p(-alpha * s)) / (alpha - 1.0)


def psi(x, alpha: float):
    """e^{x/(1-x)} (1-x)^{(a-2)/(a-1)} (1-a x)^{a/(a-1)} on [0, 1/(a v 1))."""
    _check_psi_alpha(alpha)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    end = psi_domain_end(alpha)
    if np.any(xs < 0) or np.any(xs >= end):
        raise DomainError(f"psi argument outside [0, {end})")
    out = np.array([math.exp(-_log_inv_psi(v, alpha)) for v in xs])
    return float(out[0]) if np.ndim(x) == 0 else out


class SpecialFnTable:
    """Cached cumulative values of Psi on a node set, used for fast inversion.

    Nodes are uniform on the first 90% of the domain and geometric towards the
    endpoint 1/(alpha v 1), stopping within ~1e-12 of it.
    """

    def __init__(self, alpha: float):
        _check_psi_alpha(alpha)
        self.alpha = float(alpha)
        self.x_end = psi_domain_end(alpha)
        body = np.linspace(0.0, 0.9 * self.x_end, 91)
        k = np.arange(1, 41)
        tail = self.x_end - 0.1 * self.x_end * 2.0 ** (-k)
        tail = tail[self.x_end - tail >= ENDPOINT_GAP * self.x_end]
        nodes = np.concatenate([body, tail])
        if alpha < 1:
            nodes = np.append(nodes, self.x_end)
        # inversion arguments never exceed 1, so the table stops once Psi passes PSI_CAP
        values = [0.0]
        for a, b in zip(nodes[:-1], nodes[1:]):
            values.append(values[-1] + self._segment(a, b))
            if values[-1] > PSI_CAP:
                break
        self.values = np.array(values)
        self.nodes = nodes[: len(values)]

    def _inv_psi(self, s: float) -> float:
        return math.exp(min(_log_inv_psi(s, self.alpha), 700.0))

    def _segment(self, a: float, b: float) -> float:
        if b <= a:
            return 0.0
        # full_output keeps QUADPACK round-off notices (harmless at this tolerance) quiet
        val = quad(self._inv_psi, a, b, epsabs=1e-15, epsrel=1e-13, limit=200, full_output=1)[0]
        return val

    @property
    def upper(self) -> float:
        """Largest value of Psi representable on the table."""
        return float(self.values[-1])

    def Psi(self, x: float) -> float:
        if x < 0 or x > self.x_end:
            raise DomainError(f"Psi argument {x} outside [0, {self.x_end}]")
        j = int(np.searchsorted(self.nodes, x, side="right")) - 1
        j = min(j, len(self.nodes) - 1)
        return float(self.values[j] + self._segment(self.nodes[j], x))

    def Psi_inverse(self, v: float) -> float:
        if v < 0:
            raise DomainError(f"Psi_inverse argument must be nonnegative, got {v}")
        if v == 0:
            return 0.0
        if v >= self.upper:
            raise DomainError(
                f"value {v} beyond the range of Psi (sup {self.upper:.12g}); "
                "alpha is at or below alpha*"
            )
        j = int(np.searchsorted(self.values, v, side="right")) - 1
        lo, hi = float(self.nodes[j]), float(self.nodes[j + 1])
        base = float(self.values[j])
        frac = (v - base) / (self.values[j + 1] - base)
        x = lo + frac * (hi - lo)
        for _ in range(100):
            F = base + self._segment(self.nodes[j], x) - v
            if F > 0:
                hi = x
            else:
                lo = x
            step = F / self._inv_psi(x)
            x_new = x - step
            if not (lo < x_new < hi):
                x_new = 0.5 * (lo + hi)
            if abs(x_new - x) <= 4e-16 * max(1.0, abs(x)) or hi - lo <= 4e-16:
                return x_new
            x = x_new
        raise NumericalError(f"Psi_inverse did not converge for v={v}")


@lru_cache(maxsize=128)
def special_table(alpha: float) -> SpecialFnTable:
    return SpecialFnTable(alpha)


def Psi(x: float, alpha: float) -> float:
    """Integral of 1/psi over [0, x]."""
    _check_psi_alpha(alpha)
    end = psi_domain_end(alpha)
    if x < 0 or x > end:
        raise DomainError(f"Psi argument {x} outside [0, {end}]")
    if alpha > 1 and x >= end:
        return math.inf
    val, _ = quad(lambda s: math.exp(_log_inv_psi(s, alpha)), 0.0, x,
                  epsabs=1e-15, epsrel=1e-13, limit=400)
    return val


def Psi_inverse(v: float, alpha: float) -> float:
    return special_table(float(alpha)).Psi_inverse(v)


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------


def _zero_alpha_m3_integral(L: float) -> float:
    val, _ = quad(lambda x: math.exp(-x) / (1.0 + x) ** 2, 0.0, L,
                  epsabs=1e-15, epsrel=1e-13)
    return val


def closed_form_m2_m3(t, alpha: float, market: MarketParams, prior: GaussianPrior):
    """(m2, m3) at time(s) ``t`` from the explicit solution; requires alpha > alpha*."""
    check_ode_domain(alpha, market, prior)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    T = market.T
    if np.any(t_arr < 0) or np.any(t_arr > T * (1 + 1e-14)):
        raise ParameterError("t must lie in [0, T]")
    t_arr = np.minimum(t_arr, T)
    s2 = market.sigma**2
    z = np.asarray(zeta(t_arr, market, prior))
    zT = zeta(T, market, prior)
    tau = T - t_arr
    if is_zero_alpha(alpha):
        L = np.log(z / zT)
        hm2 = 1.0 / (1.0 + L) - 1.0
        m3 = np.array([_zero_alpha_m3_integral(l) for l in L]) / zT - tau / s2
    elif is_unit_alpha(alpha):
        q = 1.0 + zT * tau / s2
        hm2 = 1.0 / q - 1.0
        m3 = 1.0 / z - (1.0 / zT) / q
    else:
        table = special_table(float(alpha))
        v = zT * tau / s2
        v_max = zT * T / s2
        if v_max > 0.99 * table.upper:
            warnings.warn(
                f"alpha={alpha} is close to alpha*: Psi inversion near the end of its range "
                f"({v_max:.6g} vs {table.upper:.6g})",
                RuntimeWarning,
                stacklevel=2,
            )
        hm2 = -np.array([table.Psi_inverse(x) for x in v])
        expo = hm2 / (1.0 + hm2) + (alpha * np.log1p(hm2) - np.log1p(alpha * hm2)) / (alpha - 1.0)
        m3 = (1.0 / z - np.exp(expo) / zT) / alpha
    m2 = hm2 / z
    if np.ndim(t) == 0:
        return float(m2[0]), float(m3[0])
    return m2, m3


def m1_from_A1(grid: np.ndarray, A1: np.ndarray, z: np.ndarray, sigma: float) -> np.ndarray:
    """m1(t) = sigma^-2 zeta(t)^-2 int_t^T zeta^2 A1^2 ds on a grid (cumulative Simpson)."""
    f = z * z * A1 * A1
    return _tail_integral(grid, f) / (sigma**2 * z * z)


def m1_closed_unit_alpha(t, market: MarketParams, prior: GaussianPrior):
    s2 = market.sigma**2
    z = np.asarray(zeta(t, market, prior))
    zT = zeta(market.T, market, prior)
    tau = market.T - np.asarray(t, dtype=float)
    return (zT * zT * tau / (s2 * z * z)) / (1.0 + zT * tau / s2)


def m1_closed_zero_alpha(t, market: MarketParams, prior: GaussianPrior):
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    z = np.asarray(zeta(t_arr, market, prior))
    zT = zeta(market.T, market, prior)
    L = np.log(z / zT)
    integ = np.array([
        quad(lambda x: math.exp(-x - 1.0) / (x * x), -1.0 - l, -1.0,
             epsabs=1e-15, epsrel=1e-13)[0]
        for l in L
    ])
    out = zT / (z * z) * integ
    return float(out[0]) if np.ndim(t) == 0 else out


def m4_m5(m1, m2, m3, r: float):
    return -r * (m1 + m2), -r * (m2 + m3)


def m6_from(grid, m1, m4, m5, A2, z, market: MarketParams) -> np.ndarray:
    r = market.r
    f = 0.5 * A2 * A2 * m5 * m5 - 0.5 * r * r + 0.5 * z * z * m1 + r * z * m4
    return _tail_integral(grid, f) / market.sigma**2


def _tail_integral(grid: np.ndarray, f: np.ndarray) -> np.ndarray:
    if len(grid) < 3:
        raise ParameterError("need at least 3 grid points for Simpson quadrature")
    cum = cumulative_simpson(f, x=grid, initial=0.0)
    return cum[-1] - cum


# --------------------------------------------------------------------------
# solution container
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OdeSolution:
    """m1..m6 on an increasing time grid, with Hermite interpolation in between."""

    alpha: float
    market: MarketParams
    prior: GaussianPrior
    grid: np.ndarray
    m: np.ndarray  # shape (6, n)
    method: str = "closed_form"

    @property
    def zeta(self) -> np.ndarray:
        return zeta(self.grid, self.market, self.prior)

    @cached_property
    def A(self) -> tuple[np.ndarray, np.ndarray]:
        return _a1_a2(self.zeta, self.m[1], self.m[2], self.alpha)

    @property
    def A1(self) -> np.ndarray:
        return self.A[0]

    @property
    def A2(self) -> np.ndarray:
        return self.A[1]

    @cached_property
    def dm(self) -> np.ndarray:
        return ode_rhs(self.grid, self.m, self.alpha, self.market, self.prior)

    @cached_property
    def _spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.grid, self.m.T, self.dm.T, axis=0)

    def _check_t(self, t) -> None:
        t = np.asarray(t, dtype=float)
        lo, hi = self.grid[0], self.grid[-1]
        tol = 1e-12 * max(1.0, abs(hi))
        if np.any(t < lo - tol) or np.any(t > hi + tol):
            raise ParameterError(f"t outside solution grid [{lo}, {hi}]")

    def at(self, t) -> np.ndarray:
        """(m1..m6) at time(s) t; shape (6,) for scalar t else (6, len(t))."""
        self._check_t(t)
        t = np.clip(np.asarray(t, dtype=float), self.grid[0], self.grid[-1])
        out = np.asarray(self._spline(t)).T
        # exact node hits return stored values (keeps m_i(T) = 0 exactly)
        idx = np.clip(np.searchsorted(self.grid, t), 0, self.grid.size - 1)
        hit = self.grid[idx] == t
        if np.ndim(t) == 0:
            return self.m[:, int(idx)].copy() if hit else out
        if np.any(hit):
            out = out.copy()
            out[:, hit] = self.m[:, idx[hit]]
        return out

    def derivatives_at(self, t) -> np.ndarray:
        """ODE right-hand side evaluated at the interpolated state."""
        return ode_rhs(t, self.at(t), self.alpha, self.market, self.prior)

    def scaled(self, index: int, factor: float) -> "OdeSolution":
        """Copy with one coefficient function multiplied by ``factor`` (test hook)."""
        m = self.m.copy()
        m[index] = m[index] * factor
        return OdeSolution(self.alpha, self.market, self.prior, self.grid, m,
                           self.method + f"+scaled[{index}]")

    def check_bands(self) -> None:
        """Assert the sign bands of (m2, m3) and positivity of 1/zeta - alpha m3."""
        z = self.zeta
        m2, m3 = self.m[1], self.m[2]
        inner = self.grid < self.grid[-1]
        lower = -1.0 / max(self.alpha, 1.0)
        hm2 = z * m2
        if not np.all((hm2[inner] < 0) & (hm2[inner] > lower)):
            raise NumericalError("zeta*m2 outside (-1/(alpha v 1), 0)")
        if not np.all(m3[inner] < 0):
            raise NumericalError("m3 not negative before T")
        if not np.all(1.0 / z - self.alpha * m3 > 0):
            raise NumericalError("1/zeta - alpha*m3 not positive")


def _assemble(alpha, market, prior, grid, m2, m3, m1=None, method="closed_form"):
    z = np.asarray(zeta(grid, market, prior))
    A1, A2 = _a1_a2(z, m2, m3, alpha)
    if m1 is None:
        m1 = m1_from_A1(grid, A1, z, market.sigma)
    m4, m5 = m4_m5(m1, m2, m3, market.r)
    m6 = m6_from(grid, m1, m4, m5, A2, z, market)
    m = np.vstack([m1, m2, m3, m4, m5, m6])
    m[:, -1] = 0.0
    return OdeSolution(float(alpha), market, prior, grid, m, method)


def solve_closed_form(
    market: MarketParams,
    prior: GaussianPrior,
    alpha: float,
    n_points: int = 1001,
    strict: bool = False,
) -> OdeSolution:
    """Closed-form solution on a uniform grid of ``n_points`` nodes over [0, T].

    ``strict`` additionally enforces the equilibrium condition on alpha.
    """
    if strict:
        check_equilibrium_domain(alpha, market, prior)
    else:
        check_ode_domain(alpha, market, prior)
    if n_points < 3 or n_points % 2 == 0:
        raise ParameterError("n_points must be odd and >= 3")
    grid = np.linspace(0.0, market.T, n_points)
    m2, m3 = closed_form_m2_m3(grid, alpha, market, prior)
    m1 = None
    if is_unit_alpha(alpha):
        m1 = m1_closed_unit_alpha(grid, market, prior)
    elif is_zero_alpha(alpha):
        m1 = m1_closed_zero_alpha(grid, market, prior)
    sol = _assemble(alpha, market, prior, grid, m2, m3, m1)
    sol.check_bands()
    return sol


def coefficients_at(t: float, alpha: float, market: MarketParams, prior: GaussianPrior,
                    n_gauss: int = 48) -> tuple[float, float, float]:
    """(m1, m2, m3) at a single time without building a full grid.

    m1 uses Gauss-Legendre quadrature of zeta^2 A1^2 over [t, T].
    """
    m2, m3 = closed_form_m2_m3(t, alpha, market, prior)
    if t >= market.T:
        return 0.0, m2, m3
    x, w = np.polynomial.legendre.leggauss(n_gauss)
    s = 0.5 * (market.T - t) * (x + 1.0) + t
    m2s, m3s = closed_form_m2_m3(s, alpha, market, prior)
    zs = np.asarray(zeta(s, market, prior))
    A1, _ = _a1_a2(zs, m2s, m3s, alpha)
    integral = 0.5 * (market.T - t) * np.dot(w, zs * zs * A1 * A1)
    z = zeta(t, market, prior)
    return integral / (market.sigma**2 * z * z), m2, m3


# --------------------------------------------------------------------------
# RK4 oracle
# --------------------------------------------------------------------------


@njit(cache=True)
def _rhs_kernel(t, y, alpha, r, s2, v0, out):
    z = s2 * v0 / (s2 + t * v0)
    den = 1.0 / z - alpha * y[2]
    if not den > 0.0:
        return False
    q = 1.0 + z * y[1]
    a1 = q * (1.0 / z + alpha * y[1]) / den
    a2 = alpha * q / den
    out[0] = (2.0 * z * y[0] - a1 * a1) / s2
    out[1] = (q * a1 + z * y[1]) / s2
    out[2] = (-2.0 * z * y[1] - z * z * y[1] * y[1]) / s2
    out[3] = (z * y[3] - a1 * a2 * y[4] - r * z * y[0]) / s2
    out[4] = (q * a2 * y[4] - r * q) / s2
    out[5] = (-0.5 * a2 * a2 * y[4] * y[4] + 0.5 * r * r - 0.5 * z * z * y[0] - r * z * y[3]) / s2
    return True


@njit(cache=True)
def _rk4_backward(alpha, r, s2, v0, T, n_steps, out):
    h = T / n_steps
    y = np.zeros(6)
    tmp = np.empty(6)
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    out[n_steps, :] = 0.0
    for i in range(n_steps, 0, -1):
        t = T * i / n_steps
        if not _rhs_kernel(t, y, alpha, r, s2, v0, k1):
            return i
        for j in range(6):
            tmp[j] = y[j] - 0.5 * h * k1[j]
        if not _rhs_kernel(t - 0.5 * h, tmp, alpha, r, s2, v0, k2):
            return i
        for j in range(6):
            tmp[j] = y[j] - 0.5 * h * k2[j]
        if not _rhs_kernel(t - 0.5 * h, tmp, alpha, r, s2, v0, k3):
            return i
        for j in range(6):
            tmp[j] = y[j] - h * k3[j]
        if not _rhs_kernel(t - h, tmp, alpha, r, s2, v0, k4):
            return i
        for j in range(6):
            y[j] = y[j] - h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        out[i - 1, :] = y
    z0 = s2 * v0 / s2
    if not 1.0 / z0 - alpha * y[2] > 0.0:
        return 0
    return -1


def solve_ode_numeric(
    market: MarketParams,
    prior: GaussianPrior,
    alpha: float,
    n_steps: int = 100_000,
) -> OdeSolution:
    """Backward RK4 on a uniform grid of ``n_steps`` steps; independent of the closed forms."""
    if n_steps < 1000:
        raise ParameterError("n_steps must be >= 1000")
    check_ode_domain(alpha, market, prior)
    out = np.empty((n_steps + 1, 6))
    bad = _rk4_backward(float(alpha), float(market.r), market.sigma**2,
                        prior.sigma0**2, float(market.T), int(n_steps), out)
    if bad >= 0:
        t_bad = market.T * bad / n_steps
        raise DomainError(f"1/zeta - alpha*m3 <= 0 reached at t = {t_bad:.10g}")
    grid = np.linspace(0.0, market.T, n_steps + 1)
    return OdeSolution(float(alpha), market, prior, grid, out.T.copy(), "rk4")


def sup_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max|a - b| / max|b| (0 when both vanish)."""
    scale = np.max(np.abs(b))
    diff = np.max(np.abs(np.asarray(a) - np.asarray(b)))
    return float(diff / scale) if scale > 0 else float(diff)


def compare_with_rk4(sol: OdeSolution, rk4: OdeSolution) -> dict[str, float]:
    """Sup-norm relative error of each m_i of ``sol`` against the RK4 values at sol's nodes."""
    ref = rk4.at(sol.grid)
    return {f"m{i + 1}": sup_relative_error(sol.m[i], ref[i]) for i in range(6)}
