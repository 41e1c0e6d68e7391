"""Price loading and maximum-likelihood calibration of drift, volatility and prior.

Log returns of a geometric Brownian motion sampled every ``dt`` years are
i.i.d. Normal((mu - sigma^2/2) dt, sigma^2 dt). Missing calendar days are not
adjusted for: consecutive rows are always one step ``dt`` apart.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .model import GaussianPrior

TRADING_DAYS = 252
MIN_OBSERVATIONS = 30


class PriceFormatError(ParameterError):
    """Malformed price file; the message names the offending line."""


@dataclass(frozen=True)
class PriceSeries:
    dates: tuple[date, ...]
    closes: np.ndarray
    dt: float = 1.0 / TRADING_DAYS

    def __post_init__(self) -> None:
        closes = np.asarray(self.closes, dtype=float)
        if len(self.dates) != closes.size:
            raise ParameterError("dates and closes differ in length")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if np.any(~(closes > 0)) or not np.all(np.isfinite(closes)):
            raise ParameterError("closes must be positive and finite")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ParameterError("dates must be strictly increasing")
        object.__setattr__(self, "closes", closes)

    def __len__(self) -> int:
        return self.closes.size

    def log_returns(self) -> np.ndarray:
        return np.diff(np.log(self.closes))


def load_prices(path: str | Path, fmt: str = "csv", dt: float = 1.0 / TRADING_DAYS) -> PriceSeries:
    """Read a UTF-8 CSV with header ``date,close`` (ISO-8601 dates, strictly increasing)."""
    if fmt != "csv":
        raise ParameterError(f"unsupported format {fmt!r}")
    rows: list[tuple[date, float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise PriceFormatError(f"{path}: empty file")
        if [h.strip().lower() for h in header] != ["date", "close"]:
            raise PriceFormatError(f"{path}:1: expected header 'date,close', got {header}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise PriceFormatError(f"{path}:{line}: expected 2 fields, got {len(row)}")
            try:
                d = date.fromisoformat(row[0].strip())
            except ValueError:
                raise PriceFormatError(f"{path}:{line}: bad date {row[0]!r}") from None
            text = row[1].strip()
            if not text:
                raise PriceFormatError(f"{path}:{line}: missing close")
            try:
                c = float(text)
            except ValueError:
                raise PriceFormatError(f"{path}:{line}: bad close {text!r}") from None
            if not (c > 0 and math.isfinite(c)):
                raise PriceFormatError(f"{path}:{line}: close must be positive, got {text}")
            if rows and d <= rows[-1][0]:
                raise PriceFormatError(
                    f"{path}:{line}: date {d.isoformat()} does not follow {rows[-1][0].isoformat()}"
                )
            rows.append((d, c))
    if not rows:
        raise PriceFormatError(f"{path}: no data rows")
    return PriceSeries(tuple(d for d, _ in rows), np.array([c for _, c in rows]), dt)


@dataclass(frozen=True)
class MleEstimate:
    mu: float
    sigma: float
    n: int  # number of returns
    dt: float


def mle_estimate(series: PriceSeries) -> MleEstimate:
    """Gaussian MLE on log returns: sigma^2 = sum (r - rbar)^2 / (n dt), mu = rbar/dt + sigma^2/2."""
    if len(series) < MIN_OBSERVATIONS:
        raise ParameterError(
            f"need at least {MIN_OBSERVATIONS} observations, got {len(series)}"
        )
    r = series.log_returns()
    n = r.size
    rbar = float(np.mean(r))
    var = float(np.mean((r - rbar) ** 2)) / series.dt
    return MleEstimate(rbar / series.dt + 0.5 * var, math.sqrt(var), n, series.dt)


def calibrate_prior(est: PriceSeries | MleEstimate, sigma0: float | None = None) -> GaussianPrior:
    """Prior centred on the MLE drift; default spread is the drift standard error sigma/sqrt(n dt)."""
    if isinstance(est, PriceSeries):
        est = mle_estimate(est)
    if sigma0 is None:
        sigma0 = est.sigma / math.sqrt(est.n * est.dt)
    return GaussianPrior(est.mu, sigma0)


def simulate_gbm(mu: float, sigma: float, n: int, dt: float = 1.0 / TRADING_DAYS,
                 s0: float = 100.0, seed: int = 0) -> np.ndarray:
    """Exact GBM closes at n + 1 equally spaced times (synthetic test data)."""
    rng = np.random.default_rng(seed)
    steps = (mu - 0.5 * sigma**2) * dt + sigma * math.sqrt(dt) * rng.standard_normal(n)
    return s0 * np.exp(np.concatenate([[0.0], np.cumsum(steps)]))
