"""Echo-chamber and pump-and-dump overlays on the base market."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from hiermarket import _kernels as K
from hiermarket.hierarchy import HierarchyParams, counts
from hiermarket.roles import TraderRole
from hiermarket.seeding import derive

BASELINE_RUNS = 50
SUCCESS_QUANTILE = 0.95


class EchoMode(str, Enum):
    OFF = "off"
    ASYMMETRIC = "asymmetric"
    SYMMETRIC = "symmetric"


_ECHO_CODES = {
    EchoMode.OFF: K.ECHO_OFF,
    EchoMode.ASYMMETRIC: K.ECHO_ASYMMETRIC,
    EchoMode.SYMMETRIC: K.ECHO_SYMMETRIC,
}


@dataclass(frozen=True)
class EchoConfig:
    mode: EchoMode = EchoMode.OFF
    E: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", EchoMode(self.mode))
        if not math.isfinite(self.E) or self.E < 1:
            raise ValueError(f"echo multiplier E must be >= 1, got {self.E}")

    @property
    def code(self) -> int:
        return _ECHO_CODES[self.mode]


@dataclass(frozen=True)
class PumpDumpConfig:
    target: int
    T0: int
    T1: int
    S: float

    def __post_init__(self):
        if not 0 <= self.T0 < self.T1:
            raise ValueError(f"corruption window needs 0 <= T0 < T1, got [{self.T0}, {self.T1})")
        if not math.isfinite(self.S) or self.S < 0:
            raise ValueError(f"signal strength S must be non-negative, got {self.S}")

    def validate(self, hparams: HierarchyParams, steps: int) -> None:
        _, n_c = counts(hparams)
        if not 0 <= self.target < n_c:
            raise ValueError(f"target {self.target} is not a community node (0..{n_c - 1})")
        if self.T1 > steps:
            raise ValueError(f"T1={self.T1} exceeds the run length {steps}")

    def active(self, t: int) -> bool:
        return self.T0 <= t < self.T1


def effective_influence(role, parent_state, echo: EchoConfig | None, omega: float = 1.0,
                        upsilon: float = 1.0) -> np.ndarray:
    """Leaf ``[o, p, f]`` vector for one trader under an echo configuration."""
    role = TraderRole(role)
    if role is TraderRole.FUNDAMENTALIST:
        return np.array([0.0, 0.0, 1.0])
    o, p = float(parent_state[0]), float(parent_state[1])
    mode = EchoMode.OFF if echo is None else echo.mode
    E = 1.0 if echo is None else echo.E
    if role is TraderRole.OPTIMIST:
        w = omega * E if mode is not EchoMode.OFF and o > p else omega
        return np.array([w, 0.0, 0.0])
    u = upsilon * E if mode is EchoMode.SYMMETRIC and p > o else upsilon
    return np.array([0.0, u, 0.0])


def corrupted_forward_emission(state, S: float, active: bool = True) -> np.ndarray:
    """What a corrupted community passes down to its children."""
    o, p, f = (float(x) for x in state)
    if not active:
        return np.array([o, p, f])
    return np.array([S * (o + p + f), p, f])


def success_threshold(baseline_max_prices) -> float:
    """Nearest-rank 95th percentile of the baseline maxima (48th of 50)."""
    maxima = np.sort(np.asarray(baseline_max_prices, dtype=float))
    if maxima.size < BASELINE_RUNS:
        raise ValueError(f"need at least {BASELINE_RUNS} baseline runs, got {maxima.size}")
    rank = math.ceil(SUCCESS_QUANTILE * maxima.size)
    return float(maxima[rank - 1])


def window_max(prices, T0: int) -> float:
    prices = np.asarray(prices, dtype=float)
    if T0 >= prices.size:
        raise ValueError(f"T0={T0} lies beyond the series ({prices.size} steps)")
    return float(prices[T0:].max())


def pnd_success(corrupted_prices, baseline_max_prices, T0: int) -> bool:
    """True when the post-onset peak beats 95% of the uncorrupted peaks."""
    return window_max(corrupted_prices, T0) > success_threshold(baseline_max_prices)


@dataclass
class PumpDumpOutcome:
    success: bool
    corrupted_max: float
    threshold: float
    baseline_maxima: np.ndarray
    corrupted: object  # MarketSeries


def pnd_evaluate(params, hparams, pnd: PumpDumpConfig | None, steps: int, master_seed: int,
                 T0: int | None = None, baseline_runs: int = BASELINE_RUNS) -> PumpDumpOutcome:
    """Run one corrupted market against ``baseline_runs`` honest ones.

    ``pnd=None`` gives a null corruption (an honest run from the corrupted
    stream); ``T0`` then sets the comparison window.
    """
    from hiermarket.dynamics import simulate

    T0 = pnd.T0 if T0 is None else T0
    baseline = np.array([
        window_max(simulate(params, hparams, steps, derive(master_seed, "baseline", i)).price, T0)
        for i in range(baseline_runs)
    ])
    corrupted = simulate(params, hparams, steps, derive(master_seed, "corrupted", 0), pnd=pnd)
    peak = window_max(corrupted.price, T0)
    threshold = success_threshold(baseline)
    return PumpDumpOutcome(peak > threshold, peak, threshold, baseline, corrupted)
