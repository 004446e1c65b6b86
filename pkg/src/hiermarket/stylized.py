"""Return statistics used to check a simulated market against stylized facts.

Metrics that cannot be estimated from the data at hand (too short a tail,
zero variance, too few positive ACF lags) come back as ``None`` rather than
raising, so a batch of trials can be summarised over the successes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

TAIL_FRACTIONS = (0.025, 0.05, 0.10)
KURTOSIS_HORIZONS = (1, 10, 50)
ACF_LAG = 10
ACF_HORIZON = 70
DECAY_MAX_LAG = 70
MIN_TAIL = 10
MIN_DECAY_POINTS = 5


@dataclass
class ReturnSeries:
    horizon: int
    values: np.ndarray

    def __len__(self):
        return len(self.values)


def log_returns(prices, T: int = 1) -> ReturnSeries:
    """``ln p_t - ln p_{t-T}`` for ``t = T .. end``."""
    prices = np.asarray(prices, dtype=float)
    if T < 1:
        raise ValueError("horizon must be at least one step")
    if prices.size <= T:
        raise ValueError(f"need more than {T} prices, got {prices.size}")
    if np.any(prices <= 0):
        raise ValueError("prices must be positive")
    logp = np.log(prices)
    return ReturnSeries(T, logp[T:] - logp[:-T])


def hill_alpha(abs_returns, tail_fraction: float) -> float | None:
    """Hill tail index from the top ``floor(tail_fraction * n)`` order statistics.

    Zeros are dropped first; ``n`` counts the remaining positive values.
    """
    if not 0 < tail_fraction < 0.5:
        raise ValueError(f"tail_fraction must lie in (0, 0.5), got {tail_fraction}")
    x = np.abs(np.asarray(abs_returns, dtype=float))
    x = np.sort(x[x > 0])
    n = x.size
    m = int(math.floor(tail_fraction * n))
    if m < MIN_TAIL:
        return None
    logs = np.log(x)
    mean_excess = np.mean(logs[n - m :] - logs[n - m - 1])
    if mean_excess <= 0:
        return None
    return float(1.0 / mean_excess)


def excess_kurtosis(returns) -> float | None:
    """Bias-adjusted sample excess kurtosis (the Fisher G2 estimator)."""
    x = np.asarray(getattr(returns, "values", returns), dtype=float)
    n = x.size
    if n < 4:
        raise ValueError("excess kurtosis needs at least four observations")
    d = x - x.mean()
    m2 = np.mean(d**2)
    if m2 * m2 <= 0:  # also catches variances that underflow when squared
        return None
    g2 = np.mean(d**4) / m2**2 - 3.0
    return float(((n + 1) * g2 + 6.0) * (n - 1) / ((n - 2) * (n - 3)))


def acf_values(series, max_lag: int) -> np.ndarray | None:
    """Sample autocorrelations at lags ``0..max_lag`` (full-sample mean/variance)."""
    x = np.asarray(getattr(series, "values", series), dtype=float)
    if x.size <= max_lag:
        raise ValueError(f"series of length {x.size} is too short for lag {max_lag}")
    d = x - x.mean()
    denom = np.dot(d, d)
    if denom <= 0:
        return None
    n = x.size
    return np.array([np.dot(d[: n - lag], d[lag:]) / denom for lag in range(max_lag + 1)])


def acf(series, lag: int) -> float | None:
    vals = acf_values(series, lag)
    return None if vals is None else float(vals[lag])


def acf_decay_fit(abs_returns, max_lag: int = DECAY_MAX_LAG, acf_given=None):
    """Fit ``acf(tau) = a * tau**-beta`` by least squares in log-log space.

    Pass ``acf_given`` (values at lags 1..max_lag) to fit an ACF directly.
    Returns ``(a, beta)`` or ``None`` when fewer than five lags are positive.
    """
    if acf_given is None:
        vals = acf_values(abs_returns, max_lag)
        if vals is None:
            return None
        vals = vals[1:]
    else:
        vals = np.asarray(acf_given, dtype=float)[:max_lag]
    lags = np.arange(1, vals.size + 1, dtype=float)
    keep = vals > 0
    if keep.sum() < MIN_DECAY_POINTS:
        return None
    lx = np.log(lags[keep])
    ly = np.log(vals[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(math.exp(intercept)), float(-slope)


def volatility(prices) -> float:
    """Population standard deviation of the price level."""
    p = np.asarray(prices, dtype=float)
    if p.size < 2:
        raise ValueError("volatility needs at least two prices")
    return float(np.sqrt(np.mean((p - p.mean()) ** 2)))


def fundamental_deviation(prices, fundamentals) -> float:
    """RMS distance from the fundamental minus the price's own spread."""
    p = np.asarray(prices, dtype=float)
    f = np.asarray(fundamentals, dtype=float)
    if p.shape != f.shape:
        raise ValueError(f"length mismatch: {p.shape} prices vs {f.shape} fundamentals")
    if p.size < 2:
        raise ValueError("need at least two observations")
    return float(np.sqrt(np.mean((p - f) ** 2)) - volatility(p))


@dataclass
class StylizedReport:
    tail_alpha_2_5: float | None
    tail_alpha_5: float | None
    tail_alpha_10: float | None
    kurtosis_T1: float | None
    kurtosis_T10: float | None
    kurtosis_T50: float | None
    acf_abs: float | None
    acf_sq: float | None
    decay_a: float | None
    decay_beta: float | None
    sigma: float
    F_sigma: float

    def as_dict(self) -> dict:
        return asdict(self)


def _safe_kurtosis(prices, T):
    if len(prices) <= T + 3:
        return None
    return excess_kurtosis(log_returns(prices, T))


def stylized_report(prices, fundamentals, sample_every: int = 1) -> StylizedReport:
    """All stylized-fact metrics for one price path.

    Return-based metrics use every ``sample_every``-th price; volatility and
    fundamental deviation use the full path.
    """
    prices = np.asarray(prices, dtype=float)
    sampled = prices[sample_every - 1 :: sample_every]

    r1 = np.abs(log_returns(sampled, 1).values)
    tails = [hill_alpha(r1, q) for q in TAIL_FRACTIONS]
    kurts = [_safe_kurtosis(sampled, T) for T in KURTOSIS_HORIZONS]

    acf_abs = acf_sq = decay = None
    if sampled.size > ACF_HORIZON + max(ACF_LAG, DECAY_MAX_LAG):
        r70 = log_returns(sampled, ACF_HORIZON).values
        acf_abs = acf(np.abs(r70), ACF_LAG)
        acf_sq = acf(r70**2, ACF_LAG)
        decay = acf_decay_fit(np.abs(r70), DECAY_MAX_LAG)

    return StylizedReport(
        tail_alpha_2_5=tails[0],
        tail_alpha_5=tails[1],
        tail_alpha_10=tails[2],
        kurtosis_T1=kurts[0],
        kurtosis_T10=kurts[1],
        kurtosis_T50=kurts[2],
        acf_abs=acf_abs,
        acf_sq=acf_sq,
        decay_a=None if decay is None else decay[0],
        decay_beta=None if decay is None else decay[1],
        sigma=volatility(prices),
        F_sigma=fundamental_deviation(prices, fundamentals),
    )
