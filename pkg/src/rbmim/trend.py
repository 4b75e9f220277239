"""Per-class reconstruction-error trends: windowed running-sum regression,
ADWIN-style window sizing and a first-difference Granger causality test."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import stats


class SequencingError(ValueError):
    """Raised when trend updates arrive out of time order."""


class InsufficientData(Exception):
    """Not enough (or degenerate) data for a trend or test; never a drift signal."""


class _Sum:
    """Neumaier-compensated running sum supporting removals."""

    __slots__ = ("s", "c")

    def __init__(self):
        self.s = 0.0
        self.c = 0.0

    def add(self, x: float):
        t = self.s + x
        if abs(self.s) >= abs(x):
            self.c += (self.s - t) + x
        else:
            self.c += (x - t) + self.s
        self.s = t

    @property
    def value(self) -> float:
        return self.s + self.c


@dataclass
class ClassTrend:
    """Running regression sums over the retained (t, R) pairs of one class.

    ``T`` and ``T2`` are kept as exact integers; the error sums are compensated.
    """

    W: int
    pairs: deque = field(default_factory=deque)
    trend_series: deque = field(default_factory=deque)
    last_t: int | None = None
    T: int = 0
    T2: int = 0
    _TR: _Sum = field(default_factory=_Sum)
    _R: _Sum = field(default_factory=_Sum)
    _R2: _Sum = field(default_factory=_Sum)

    @property
    def TR(self) -> float:
        return self._TR.value

    @property
    def R(self) -> float:
        return self._R.value

    @property
    def R2(self) -> float:
        return self._R2.value

    @property
    def n(self) -> int:
        return len(self.pairs)

    def _add(self, t: int, r: float, sign: int):
        self.T += sign * t
        self.T2 += sign * t * t
        self._TR.add(sign * t * r)
        self._R.add(sign * r)
        self._R2.add(sign * r * r)

    def push(self, t: int, r: float):
        self.pairs.append((t, r))
        self._add(t, r, +1)

    def evict_to(self, size: int):
        while len(self.pairs) > size:
            t, r = self.pairs.popleft()
            self._add(t, r, -1)

    def reset(self, W: int):
        self.__init__(W=W, trend_series=deque(maxlen=self.trend_series.maxlen),
                      last_t=self.last_t)


@dataclass
class TrendTracker:
    Z: int
    W_min: int = 8
    W_max: int = 200
    delta_w: float = 0.002
    lag: int = 1
    classes: list = field(default=None)

    def __post_init__(self):
        if not 2 <= self.W_min <= self.W_max:
            raise ValueError("need 2 <= W_min <= W_max")
        if self.classes is None:
            L = self.series_length
            self.classes = [ClassTrend(self.W_min, trend_series=deque(maxlen=L))
                            for _ in range(self.Z)]

    @property
    def series_length(self) -> int:
        return 2 * max(8, 2 * (self.lag + 2))

    def __getitem__(self, m) -> ClassTrend:
        return self.classes[m]

    def reset_class(self, m: int):
        self.classes[m].reset(self.W_min)


def update_trend(tracker: TrendTracker, m: int, t: int, R: float) -> TrendTracker:
    """Add (t, R) for class ``m``; drop the oldest pairs while more than W are retained."""
    ct = tracker[m]
    if ct.last_t is not None and t <= ct.last_t:
        raise SequencingError(f"class {m}: t={t} after t={ct.last_t}")
    ct.last_t = t
    ct.push(int(t), float(R))
    ct.evict_to(ct.W)
    return tracker


def effective_count(t: int, W: int) -> int:
    return t if t <= W else W


def slope_from_sums(n: int, TR: float, T: float, R: float, T2: float) -> float:
    den = n * T2 - T * T
    if n < 2 or den == 0:
        raise InsufficientData("need at least two distinct time points")
    return (n * TR - T * R) / den


def trend_slope(tracker: TrendTracker, m: int) -> float:
    """Least-squares slope of R against t over the retained window."""
    ct = tracker[m]
    return slope_from_sums(ct.n, ct.TR, ct.T, ct.R, ct.T2)


def prediction_pvalue(tracker: TrendTracker, m: int, t: int, r: float,
                      recent: int | None = None) -> float:
    """One-sided p-value of a new error ``r`` at time ``t`` under class ``m``'s fitted trend.

    Fits an OLS line to the last ``recent`` retained pairs (all of them when
    None) and uses its prediction interval with n - 2 degrees of freedom.
    Small values mean ``r`` lies above what the trend predicts.
    """
    pairs = tracker[m].pairs
    k = len(pairs) if recent is None else min(recent, len(pairs))
    if k < 4:
        raise InsufficientData("need four points for a trend prediction interval")
    tr = np.array([pairs[i] for i in range(len(pairs) - k, len(pairs))], dtype=float)
    ts, rs = tr[:, 0], tr[:, 1]
    tbar, rbar = ts.mean(), rs.mean()
    stt = float(((ts - tbar) ** 2).sum())
    q = float(((ts - tbar) * (rs - rbar)).sum()) / stt
    resid = rs - rbar - q * (ts - tbar)
    rss = float(resid @ resid)
    if rss <= 1e-24 * max(float(rs @ rs), 1e-300):
        raise InsufficientData("zero residual variance")
    se = math.sqrt(rss / (k - 2) * (1.0 + 1.0 / k + (t - tbar) ** 2 / stt))
    return float(stats.t.sf((r - (rbar + q * (t - tbar))) / se, k - 2))


def hoeffding_cut(n0: int, n1: int, delta: float) -> float:
    m = 1.0 / (1.0 / n0 + 1.0 / n1)
    return math.sqrt(math.log(4.0 * (n0 + n1) / delta) / (2.0 * m))


def adaptive_window(tracker: TrendTracker, m: int, min_sub: int = 2) -> int:
    """ADWIN-style resize of class ``m``'s window; returns the new W.

    Every split of the retained history into an older and a newer part is
    checked; while some split's means differ by more than the Hoeffding cut,
    the older part is dropped. Without a cut, W grows by one up to W_max.
    """
    ct = tracker[m]
    if ct.n == 0:
        raise InsufficientData("empty history")
    cut = False
    while ct.n >= 2 * min_sub:
        r = np.fromiter((p[1] for p in ct.pairs), float, ct.n)
        n = r.size
        cs = np.cumsum(r)
        i = np.arange(min_sub, n - min_sub + 1)
        mu0 = cs[i - 1] / i
        mu1 = (cs[-1] - cs[i - 1]) / (n - i)
        harm = 1.0 / (1.0 / i + 1.0 / (n - i))
        eps = np.sqrt(np.log(4.0 * n / tracker.delta_w) / (2.0 * harm))
        hit = np.flatnonzero(np.abs(mu0 - mu1) > eps)
        if hit.size == 0:
            break
        cut = True
        ct.evict_to(n - int(i[hit[0]]))
    if cut:
        ct.W = max(tracker.W_min, ct.n)
    else:
        ct.W = min(ct.W + 1, tracker.W_max)
    ct.evict_to(ct.W)
    return ct.W


@dataclass(frozen=True)
class GrangerResult:
    statistic: float
    p_value: float
    decision: str  # "stable", "drift" or "insufficient"


def _rss(y, X):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ beta
    return float(r @ r)


def granger_drift_test(series, lag: int = 1, alpha: float = 0.05) -> GrangerResult:
    """Does the older half of a trend series Granger-cause the newer half?

    Both halves are first-differenced. The newer half's differences are
    regressed on their own ``lag`` lags (restricted) and additionally on the
    time-aligned ``lag`` lags of the older half's differences (unrestricted).
    A p-value above ``alpha`` means the old trend no longer forecasts the new
    one: ``decision == "drift"``. Degenerate input yields ``"insufficient"``.
    """
    s = np.asarray(series, dtype=float)
    L = s.size // 2
    if s.size < 2 * (lag + 2) or L - 2 - 3 * lag < 1:
        return GrangerResult(math.nan, math.nan, "insufficient")
    prev, cur = s[-2 * L:-L], s[-L:]
    dx, dy = np.diff(prev), np.diff(cur)
    if np.ptp(dx) == 0 or np.ptp(dy) == 0:
        return GrangerResult(math.nan, math.nan, "insufficient")
    n = dy.size
    rows = np.arange(lag, n)
    y = dy[rows]
    own = np.column_stack([dy[rows - q] for q in range(1, lag + 1)])
    cross = np.column_stack([dx[rows - q] for q in range(1, lag + 1)])
    ones = np.ones((rows.size, 1))
    rss_r = _rss(y, np.hstack([ones, own]))
    rss_u = _rss(y, np.hstack([ones, own, cross]))
    df2 = rows.size - 2 * lag - 1
    scale = max(float(y @ y), 1e-300)
    if rss_u <= 1e-24 * scale:
        if rss_r <= 1e-24 * scale:
            return GrangerResult(math.nan, math.nan, "insufficient")
        return GrangerResult(math.inf, 0.0, "stable")
    F = max(rss_r - rss_u, 0.0) / lag / (rss_u / df2)
    p = float(stats.f.sf(F, lag, df2))
    return GrangerResult(F, p, "drift" if p > alpha else "stable")
