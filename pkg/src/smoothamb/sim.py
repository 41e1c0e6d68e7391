"""Monte Carlo engine for the inside system and the two-layer objective.

Paths are generated in fixed-size blocks. Every block draws its Brownian
increments from its own Philox substream keyed by (seed, tag, block index),
so the output does not depend on how many threads execute the blocks.
Antithetic partners reuse the negated increments of the first half of a block.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericalError, ParameterError
from .model import GaussianPrior, MarketParams, Preferences, phi, utility
from .odes import OdeSolution, zeta
from .strategy import EquilibriumFeedback, Feedback, SpikedFeedback, g_array, g_value, pde_residual

SCHEMES = ("euler", "exact-beta")

# substream tags
TAG_INSIDE = 1
TAG_OUTER = 2
TAG_INNER = 3
TAG_MARTINGALE = 4


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings; ``beta0=None`` starts from the prior mean."""

    n_paths: int = 200_000
    n_steps: int = 1000
    seed: int = 12345
    t0: float = 0.0
    x0: float = 1.0
    beta0: float | None = None
    inner_paths: int = 10_000
    scheme: str = "exact-beta"
    block_size: int = 8192
    threads: int = 1

    def __post_init__(self) -> None:
        if self.n_paths < 1 or self.n_steps < 1 or self.inner_paths < 1:
            raise ParameterError("n_paths, n_steps and inner_paths must be >= 1")
        if self.n_paths % 2 or self.inner_paths % 2 or self.block_size % 2:
            raise ParameterError("path counts must be even for antithetic pairing")
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")
        if self.threads < 0:
            raise ParameterError("threads must be >= 0")

    def start_beta(self, prior: GaussianPrior) -> float:
        return prior.beta0 if self.beta0 is None else self.beta0


@dataclass(frozen=True)
class SimReport:
    estimate: float
    std_error: float
    n_effective: int
    diagnostics: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.std_error >= 0:
            raise ParameterError("std_error must be nonnegative")

    def z_score(self, reference: float) -> float:
        if self.std_error == 0:
            return 0.0 if self.estimate == reference else math.inf
        return (self.estimate - reference) / self.std_error


@dataclass(frozen=True)
class InsideSamples:
    X: np.ndarray
    beta: np.ndarray
    finite: np.ndarray  # mask of paths kept

    @property
    def n_excluded(self) -> int:
        return int(np.size(self.finite) - np.count_nonzero(self.finite))


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox generator for the given integer key."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def uniform_grid(t0: float, t1: float, n_steps: int, extra=()) -> np.ndarray:
    """Uniform grid on [t0, t1] with additional break points merged in."""
    grid = np.linspace(t0, t1, n_steps + 1)
    pts = [p for p in extra if t0 < p < t1]
    if pts:
        grid = np.unique(np.concatenate([grid, pts]))
        # drop nodes that nearly coincide with a break point
        keep = np.concatenate([[True], np.diff(grid) > 1e-12 * max(1.0, abs(t1))])
        grid = grid[keep]
    return grid


def antithetic_normals(rng: np.random.Generator, n_steps: int, half: int) -> np.ndarray:
    z = rng.standard_normal((n_steps, half))
    return np.concatenate([z, -z], axis=1)


def integrate_paths(
    z: np.ndarray,
    strategy: Feedback,
    grid: np.ndarray,
    x0: float,
    beta0: float,
    normals: np.ndarray,
    scheme: str,
    market: MarketParams,
    prior: GaussianPrior,
) -> InsideSamples:
    """Euler-Maruyama for wealth and Euler or exact update for beta.

    The riskless growth of wealth is integrated exactly (factor e^{r dt}), so
    the zero strategy reproduces x0 e^{r (T - t0)} without discretization error.

    ``normals`` has shape (len(grid) - 1, n_paths); the Brownian increment of
    step i is sqrt(dt_i) * normals[i].
    """
    n = normals.shape[1]
    if normals.shape[0] != len(grid) - 1:
        raise ParameterError("normals must have one row per time step")
    z = np.broadcast_to(np.asarray(z, dtype=float), (n,))
    r, sigma = market.r, market.sigma
    s2 = sigma * sigma
    X = np.full(n, float(x0))
    beta = np.full(n, float(beta0))
    zetas = zeta(grid, market, prior)
    exact = scheme == "exact-beta"
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(len(grid) - 1):
            t = float(grid[i])
            dt = float(grid[i + 1] - grid[i])
            dW = math.sqrt(dt) * normals[i]
            pi = strategy(t, X, beta)
            X = X * math.exp(r * dt) + pi * ((z - r) * dt + sigma * dW)
            if exact:
                beta = zetas[i + 1] * (beta / zetas[i] + z * dt / s2 + dW / sigma)
            else:
                beta = beta + zetas[i] / s2 * (z - beta) * dt + zetas[i] / sigma * dW
    finite = np.isfinite(X) & np.isfinite(beta)
    return InsideSamples(X, beta, finite)


def _map_blocks(fn: Callable[[int], object], n_blocks: int, threads: int) -> list:
    if threads == 0:
        threads = os.cpu_count() or 1
    if threads <= 1 or n_blocks <= 1:
        return [fn(b) for b in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_blocks)))


def _block_sizes(n_paths: int, block: int) -> list[int]:
    sizes = [block] * (n_paths // block)
    if n_paths % block:
        sizes.append(n_paths % block)
    return sizes


def _pair_mean(v: np.ndarray, keep: np.ndarray) -> tuple[np.ndarray, int]:
    h = v.size // 2
    ok = keep[:h] & keep[h:]
    return 0.5 * (v[:h][ok] + v[h:][ok]), int(2 * (h - np.count_nonzero(ok)))


def _report(pairs: np.ndarray, excluded: int, extra: dict | None = None) -> SimReport:
    n = pairs.size
    if n == 0:
        raise NumericalError("all paths were excluded as non-finite")
    se = float(np.std(pairs, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    diag = {"n_excluded": float(excluded)}
    if extra:
        diag.update(extra)
    return SimReport(float(np.mean(pairs)), se, n, diag)


def simulate_inside(
    z: float,
    strategy: Feedback,
    cfg: SimConfig,
    market: MarketParams,
    prior: GaussianPrior,
    grid: np.ndarray | None = None,
    tag: int = TAG_INSIDE,
) -> InsideSamples:
    """Terminal (X_T, beta_T) of the inside system for a fixed drift z.

    Paths come in antithetic pairs (i, i + block/2) inside each block.
    """
    if grid is None:
        grid = uniform_grid(cfg.t0, market.T, cfg.n_steps)
    sizes = _block_sizes(cfg.n_paths, cfg.block_size)
    b0 = cfg.start_beta(prior)

    def run(b: int) -> InsideSamples:
        normals = antithetic_normals(substream(cfg.seed, tag, b), len(grid) - 1, sizes[b] // 2)
        return integrate_paths(z, strategy, grid, cfg.x0, b0, normals, cfg.scheme, market, prior)

    parts = _map_blocks(run, len(sizes), cfg.threads)
    return InsideSamples(
        np.concatenate([p.X for p in parts]),
        np.concatenate([p.beta for p in parts]),
        np.concatenate([p.finite for p in parts]),
    )


def _pairwise_block_means(samples: InsideSamples, values: np.ndarray, cfg: SimConfig):
    pairs, excluded = [], 0
    start = 0
    for size in _block_sizes(cfg.n_paths, cfg.block_size):
        sl = slice(start, start + size)
        p, e = _pair_mean(values[sl], samples.finite[sl])
        pairs.append(p)
        excluded += e
        start += size
    return np.concatenate(pairs), excluded


def estimate_inside_utility(
    z: float,
    strategy: Feedback,
    cfg: SimConfig,
    market: MarketParams,
    prior: GaussianPrior,
    prefs: Preferences,
    grid: np.ndarray | None = None,
) -> SimReport:
    """Mean and standard error of U(X_T) given Z = z (antithetic pairs)."""
    s = simulate_inside(z, strategy, cfg, market, prior, grid)
    with np.errstate(over="ignore", invalid="ignore"):
        u = np.where(s.finite, utility(np.where(s.finite, s.X, 0.0), prefs.k), np.nan)
    pairs, excluded = _pairwise_block_means(s, u, cfg)
    return _report(pairs, excluded)


# --------------------------------------------------------------------------
# nested estimator of the smooth-ambiguity objective
# --------------------------------------------------------------------------

TerminalFn = Callable[[float, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _utility_terminal(prefs: Preferences) -> TerminalFn:
    def fn(t, X, beta, z):
        return utility(X, prefs.k)

    return fn


def _ansatz_terminal(sol: OdeSolution, market: MarketParams, prefs: Preferences) -> TerminalFn:
    def fn(t, X, beta, z):
        return g_array(t, X, beta, z, sol.at(t), market, prefs)

    return fn


def outer_drifts(cfg: SimConfig, market: MarketParams, prior: GaussianPrior) -> np.ndarray:
    """Outer samples of Z ~ Normal(beta0, zeta(t0))."""
    sd = math.sqrt(zeta(cfg.t0, market, prior))
    return cfg.start_beta(prior) + sd * substream(cfg.seed, TAG_OUTER).standard_normal(cfg.n_paths)


@dataclass(frozen=True)
class NestedValues:
    """Per-outer-draw inside estimates: full sample and the two half samples."""

    full: np.ndarray
    half_a: np.ndarray
    half_b: np.ndarray
    n_excluded: int


def nested_inside_means(
    strategy: Feedback,
    cfg: SimConfig,
    market: MarketParams,
    prior: GaussianPrior,
    grid: np.ndarray,
    terminal: TerminalFn,
) -> NestedValues:
    """Inner Monte Carlo averages of terminal(T_end, X, beta, z) for each outer draw."""
    zs = outer_drifts(cfg, market, prior)
    half = cfg.inner_paths // 2
    per_block = max(1, cfg.block_size // cfg.inner_paths)
    n_blocks = -(-cfg.n_paths // per_block)
    b0 = cfg.start_beta(prior)
    t_end = float(grid[-1])

    def run(b: int):
        js = range(b * per_block, min((b + 1) * per_block, cfg.n_paths))
        g = len(js)
        draws = [substream(cfg.seed, TAG_INNER, j).standard_normal((len(grid) - 1, half))
                 for j in js]
        plus = np.concatenate(draws, axis=1)
        normals = np.concatenate([plus, -plus], axis=1)
        zrow = np.repeat(zs[list(js)], half)
        z_all = np.concatenate([zrow, zrow])
        s = integrate_paths(z_all, strategy, grid, cfg.x0, b0, normals, cfg.scheme, market, prior)
        with np.errstate(over="ignore", invalid="ignore"):
            v = terminal(t_end, s.X, s.beta, z_all)
        ok = s.finite & np.isfinite(v)
        pair = 0.5 * (v[: g * half] + v[g * half:])
        pair_ok = (ok[: g * half] & ok[g * half:]).reshape(g, half)
        pair = np.where(pair_ok, pair.reshape(g, half), 0.0)
        cnt = pair_ok.sum(axis=1)
        h2 = half // 2 if half > 1 else 1
        ca = pair_ok[:, :h2].sum(axis=1)
        cb = pair_ok[:, h2:].sum(axis=1)
        if np.any(cnt == 0) or np.any(ca == 0) or (half > 1 and np.any(cb == 0)):
            raise NumericalError("an outer draw lost all of its inner paths")
        full = pair.sum(axis=1) / cnt
        a = pair[:, :h2].sum(axis=1) / ca
        bb = pair[:, h2:].sum(axis=1) / np.maximum(cb, 1) if half > 1 else a
        return full, a, bb, int(2 * (pair_ok.size - pair_ok.sum()))

    parts = _map_blocks(run, n_blocks, cfg.threads)
    return NestedValues(
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
        sum(p[3] for p in parts),
    )


def _phi_checked(u: np.ndarray, alpha: float) -> np.ndarray:
    if np.any(u >= 0):
        raise NumericalError("inner utility estimate is nonnegative; CARA utility is negative")
    return np.asarray(phi(u, alpha))


def estimate_J(
    strategy: Feedback,
    cfg: SimConfig,
    market: MarketParams,
    prior: GaussianPrior,
    prefs: Preferences,
    grid: np.ndarray | None = None,
    terminal: TerminalFn | None = None,
) -> SimReport:
    """Nested estimate of E[phi(E[U(X_T) | Z]) | beta0] with a jackknife bias estimate.

    ``cfg.n_paths`` is the number of outer draws of Z and ``cfg.inner_paths``
    the number of inner paths per draw.
    """
    if grid is None:
        grid = uniform_grid(cfg.t0, market.T, cfg.n_steps)
    if terminal is None:
        terminal = _utility_terminal(prefs)
    nv = nested_inside_means(strategy, cfg, market, prior, grid, terminal)
    vals = _phi_checked(nv.full, prefs.alpha)
    J = float(np.mean(vals))
    halves = 0.5 * (np.mean(_phi_checked(nv.half_a, prefs.alpha))
                    + np.mean(_phi_checked(nv.half_b, prefs.alpha)))
    bias = float(halves - J)
    n = vals.size
    se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return SimReport(J, se, n, {
        "jackknife_bias": bias,
        "bias_corrected": J - bias,
        "inner_paths": float(cfg.inner_paths),
        "n_excluded": float(nv.n_excluded),
    })


# --------------------------------------------------------------------------
# verification experiments
# --------------------------------------------------------------------------


def perturbation_test(
    pi_perturb: Feedback,
    h_list,
    cfg: SimConfig,
    sol: OdeSolution,
    market: MarketParams,
    prior: GaussianPrior,
    prefs: Preferences,
    continuation: str = "simulate",
) -> list[SimReport]:
    """Slopes (J(pi_{t0,h}) - J(pi*)) / h with common random numbers.

    ``continuation="simulate"`` simulates both strategies up to T on one grid
    containing every t0 + h; ``"analytic"`` stops at t0 + h and uses the ansatz
    value of the equilibrium strategy from there on.
    """
    h_list = [float(h) for h in h_list]
    if any(not 0 < h < market.T - cfg.t0 for h in h_list):
        raise ParameterError("every h must lie in (0, T - t0)")
    eq = EquilibriumFeedback(sol, market, prefs)
    out = []
    if continuation == "simulate":
        grid = uniform_grid(cfg.t0, market.T, cfg.n_steps, [cfg.t0 + h for h in h_list])
        term = _utility_terminal(prefs)
        base = _phi_checked(nested_inside_means(eq, cfg, market, prior, grid, term).full,
                            prefs.alpha)
        for h in h_list:
            spiked = SpikedFeedback(pi_perturb, eq, cfg.t0, h)
            pert = _phi_checked(
                nested_inside_means(spiked, cfg, market, prior, grid, term).full, prefs.alpha)
            out.append(_slope_report(pert - base, h))
    elif continuation == "analytic":
        dt = (market.T - cfg.t0) / cfg.n_steps
        term = _ansatz_terminal(sol, market, prefs)
        for h in h_list:
            grid = uniform_grid(cfg.t0, cfg.t0 + h, max(4, math.ceil(h / dt - 1e-9)))
            base = _phi_checked(nested_inside_means(eq, cfg, market, prior, grid, term).full,
                                prefs.alpha)
            spiked = SpikedFeedback(pi_perturb, eq, cfg.t0, h)
            pert = _phi_checked(
                nested_inside_means(spiked, cfg, market, prior, grid, term).full, prefs.alpha)
            out.append(_slope_report(pert - base, h))
    else:
        raise ParameterError(f"unknown continuation {continuation!r}")
    return out


def _slope_report(diff: np.ndarray, h: float) -> SimReport:
    n = diff.size
    se = float(np.std(diff, ddof=1) / math.sqrt(n) / h) if n > 1 else 0.0
    return SimReport(float(np.mean(diff) / h), se, n, {"h": h})


def martingale_check(
    z: float,
    cfg: SimConfig,
    sol: OdeSolution,
    market: MarketParams,
    prior: GaussianPrior,
    prefs: Preferences,
    deltas=(0.05, 0.1),
    strategy: Feedback | None = None,
    steps_per_delta: int | None = None,
) -> list[SimReport]:
    """E[g^z(t0 + D, X, beta)] - g^z(t0, x0, beta0) for each D in ``deltas``.

    Diagnostics carry ``first_order_drift``: D times the analytic generator of
    g^z at the starting state under the simulated strategy.
    """
    eq = EquilibriumFeedback(sol, market, prefs)
    strategy = eq if strategy is None else strategy
    b0 = cfg.start_beta(prior)
    g0 = g_value(cfg.t0, cfg.x0, b0, z, sol, market, prefs).g
    pi0 = float(np.asarray(strategy(cfg.t0, np.array([cfg.x0]), np.array([b0])))[0])
    drift = pde_residual(cfg.t0, cfg.x0, b0, z, pi0, sol, market, prefs).value * abs(g0)
    out = []
    for idx, d in enumerate(deltas):
        if not 0 < d <= market.T - cfg.t0:
            raise ParameterError("each delta must lie in (0, T - t0]")
        n = steps_per_delta or max(10, math.ceil(d * cfg.n_steps / (market.T - cfg.t0)))
        grid = uniform_grid(cfg.t0, cfg.t0 + d, n)
        s = simulate_inside(z, strategy, cfg, market, prior, grid,
                            tag=TAG_MARTINGALE * 1000 + idx)
        with np.errstate(over="ignore", invalid="ignore"):
            g = np.where(s.finite,
                         g_array(cfg.t0 + d, np.where(s.finite, s.X, 0.0),
                                 np.where(s.finite, s.beta, 0.0), z, sol.at(cfg.t0 + d),
                                 market, prefs),
                         np.nan)
        pairs, excluded = _pairwise_block_means(s, g - g0, cfg)
        out.append(_report(pairs, excluded, {"delta": d, "g0": g0,
                                             "first_order_drift": drift * d}))
    return out

