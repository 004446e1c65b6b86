"""Right-tailed unit-root tests for explosive price behaviour.

``adf_stat`` is the reference regression (Householder QR). The recursive SADF
and doubly-recursive GSADF scans reuse it for lagged specifications and use
a prefix-sum kernel for the default zero-lag case, where each window's fit
reduces to a handful of running sums.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from hiermarket import _kernels as K

SIZES = (100, 200, 400, 800, 1600)
LEVELS = (90, 95, 100)

# Asymptotic SADF and finite-sample GSADF critical values by sample size; the
# "100" column is the most severe tabulated level.
CRITICAL_VALUES = {
    "SADF": {
        90: (1.10, 1.12, 1.20, 1.21, 1.23),
        95: (1.37, 1.41, 1.49, 1.51, 1.51),
        100: (1.88, 2.03, 2.07, 2.06, 2.06),
    },
    "GSADF": {
        90: (1.65, 1.84, 1.92, 2.10, 2.19),
        95: (2.00, 2.08, 2.20, 2.34, 2.41),
        100: (2.57, 2.70, 2.80, 2.79, 2.87),
    },
}
MIN_WINDOW_FRACTION = (0.190, 0.137, 0.100, 0.074, 0.055)

MIN_REGRESSION_OBS = 10
DEFAULT_MERGE_GAP = 3


def critical_value(test: str, n: int, level: int = 95) -> tuple[float, float]:
    """``(critical value, r0)`` for a sample of ``n`` observations.

    Rows are interpolated linearly in ``ln n``; ``n`` past the last row uses
    that row.
    """
    test = test.upper()
    if test not in CRITICAL_VALUES:
        raise ValueError(f"unknown test {test!r}; expected SADF or GSADF")
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}, got {level}")
    if n < SIZES[0]:
        raise ValueError(f"no critical values below n={SIZES[0]} (got {n})")
    row = CRITICAL_VALUES[test][level]
    logs = np.log(SIZES)
    x = math.log(min(n, SIZES[-1]))
    return float(np.interp(x, logs, row)), float(np.interp(x, logs, MIN_WINDOW_FRACTION))


def min_window(n: int, r0: float) -> int:
    return int(math.ceil(r0 * n - 1e-9))


def _design(y: np.ndarray, lags: int):
    dy = np.diff(y)
    rows = dy.size - lags
    X = np.empty((rows, 2 + lags))
    X[:, 0] = 1.0
    X[:, 1] = y[lags:-1]
    for j in range(1, lags + 1):
        X[:, 1 + j] = dy[lags - j : dy.size - j]
    return X, dy[lags:]


def adf_stat(y, lags: int = 0) -> float | None:
    """t-statistic of ``rho`` in ``dy_t = a + rho*y_{t-1} + sum c_j dy_{t-j} + e_t``.

    Returns ``None`` when the design is rank deficient.
    """
    y = np.asarray(y, dtype=float)
    if lags < 0:
        raise ValueError("lags must be non-negative")
    if y.size < lags + MIN_REGRESSION_OBS:
        raise ValueError(f"need at least {lags + MIN_REGRESSION_OBS} observations, got {y.size}")
    y = y - y.mean()
    X, z = _design(y, lags)
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * max(diag.max(), 1e-300):
        return None
    coef = np.linalg.solve(R, Q.T @ z)
    resid = z - X @ coef
    dof = X.shape[0] - X.shape[1]
    rss = float(resid @ resid)
    scale = float(z @ z)
    rinv = np.linalg.solve(R, np.eye(R.shape[0]))
    v11 = float(rinv[1] @ rinv[1])
    if rss <= 1e-24 * max(scale, 1e-300):
        # exact fit: defined only when the root coefficient vanishes
        return 0.0 if abs(coef[1]) <= 1e-9 else None
    return float(coef[1] / math.sqrt(rss / dof * v11))


def _window_stat_qr(y, start, end, lags):
    w = y[start : end + 1]
    if w.size < lags + MIN_REGRESSION_OBS:
        return math.nan
    stat = adf_stat(w, lags)
    return math.nan if stat is None else stat


def _check_windows(n, r0, lags):
    if not 0 < r0 <= 1:
        raise ValueError(f"r0 must lie in (0, 1], got {r0}")
    w0 = min_window(n, r0)
    if w0 < 2 or w0 > n:
        raise ValueError(f"minimum window {w0} does not fit a series of length {n}")
    return w0


def sadf(y, r0: float, lags: int = 0) -> tuple[float, np.ndarray]:
    """Sup of forward-expanding ADF statistics, and the statistic per end point.

    Element ``j`` of the sequence covers observations ``0 .. w0 - 1 + j``;
    windows too short to fit are NaN.
    """
    y = np.asarray(y, dtype=float)
    w0 = _check_windows(y.size, r0, lags)
    if lags == 0:
        seq = K.sadf_scan(np.ascontiguousarray(y - y.mean()), w0)
        seq[: max(0, MIN_REGRESSION_OBS - w0)] = np.nan
    else:
        seq = np.array([_window_stat_qr(y, 0, w0 - 1 + j, lags) for j in range(y.size - w0 + 1)])
    if np.all(np.isnan(seq)):
        raise ValueError("no window long enough for the regression")
    return float(np.nanmax(seq)), seq


def gsadf(y, r0: float, lags: int = 0) -> float:
    """Sup of ADF statistics over all windows spanning at least ``r0`` of the sample."""
    y = np.asarray(y, dtype=float)
    w0 = _check_windows(y.size, r0, lags)
    if lags == 0:
        return float(K.gsadf_scan(np.ascontiguousarray(y - y.mean()), max(w0, MIN_REGRESSION_OBS)))
    best = -math.inf
    for end in range(w0 - 1, y.size):
        for start in range(0, end - w0 + 2):
            stat = _window_stat_qr(y, start, end, lags)
            if stat > best:
                best = stat
    if best == -math.inf:
        raise ValueError("no window long enough for the regression")
    return float(best)


def pwy_stamp(sequence, cv: float, start: int = 0, min_gap: int = DEFAULT_MERGE_GAP) -> list[tuple[int, int]]:
    """Half-open ``(first, stop)`` observation ranges where the sequence exceeds ``cv``.

    ``start`` is the observation index of ``sequence[0]``. Runs separated by
    fewer than ``min_gap`` observations are merged.
    """
    seq = np.asarray(sequence, dtype=float)
    above = np.where(np.isnan(seq), False, seq > cv)
    intervals: list[list[int]] = []
    j = 0
    while j < above.size:
        if not above[j]:
            j += 1
            continue
        k = j
        while k < above.size and above[k]:
            k += 1
        if intervals and j - intervals[-1][1] < min_gap:
            intervals[-1][1] = k
        else:
            intervals.append([j, k])
        j = k
    return [(a + start, b + start) for a, b in intervals]


@dataclass
class BubbleReport:
    n: int
    level: int
    r0: float
    sadf_stat: float
    gsadf_stat: float
    sadf_cv: float
    gsadf_cv: float
    sadf_significant: bool
    gsadf_significant: bool
    explosive_intervals: list = field(default_factory=list)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["explosive_intervals"] = [list(iv) for iv in self.explosive_intervals]
        return d


def bubble_report(series, level: int = 90, lags: int = 0, stride: int = 1,
                  log_prices: bool = False, min_gap: int = DEFAULT_MERGE_GAP) -> BubbleReport:
    """SADF/GSADF significance and PWY stamping for one (already sampled) series.

    ``stride`` converts stamped observation indices back to simulation steps:
    observation ``i`` is mapped to step ``(i + 1) * stride - 1``.
    """
    y = np.asarray(series, dtype=float)
    if log_prices:
        y = np.log(y)
    gs_cv, r0 = critical_value("GSADF", y.size, level)
    sa_cv, _ = critical_value("SADF", y.size, level)
    sa_stat, seq = sadf(y, r0, lags)
    gs_stat = gsadf(y, r0, lags)
    w0 = min_window(y.size, r0)
    obs_intervals = pwy_stamp(seq, sa_cv, start=w0 - 1, min_gap=min_gap)
    intervals = [(a * stride + stride - 1, (b - 1) * stride + stride) for a, b in obs_intervals]
    return BubbleReport(
        n=int(y.size), level=level, r0=r0,
        sadf_stat=sa_stat, gsadf_stat=gs_stat, sadf_cv=sa_cv, gsadf_cv=gs_cv,
        sadf_significant=bool(sa_stat > sa_cv), gsadf_significant=bool(gs_stat > gs_cv),
        explosive_intervals=intervals,
    )
