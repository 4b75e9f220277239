"""RBM-IM drift detector: per-class reconstruction error, trends and decisions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rbm
from .rbm import ClassBalanceState, RbmHyperparams, RbmParameters
from .stream import (ClassStats, MiniBatch, StreamSchema, normalize,
                     update_class_stats_batch)
from .trend import (InsufficientData, TrendTracker, adaptive_window, granger_drift_test,
                    prediction_pvalue, trend_slope, update_trend)


class SetupError(RuntimeError):
    pass


def reconstruct(x, y, p: RbmParameters) -> tuple[np.ndarray, np.ndarray]:
    """Mean-field reconstruction of features and label through the hidden layer.

    ``x`` may be one normalized row or a block of rows; ``y`` the matching label(s).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    Zc = np.zeros((len(y), p.Z))
    Zc[np.arange(len(y)), y] = 1.0
    h = rbm.hidden_activation(X, Zc, p)
    xt = rbm.visible_activation(h, p)
    yt = rbm.class_activation(h, p)
    if single:
        return xt[0], yt[0]
    return xt, yt


def reconstruction_error(x, y, p: RbmParameters):
    """Euclidean distance between (x, one-hot y) and its reconstruction."""
    x = np.asarray(x, dtype=float)
    xt, yt = reconstruct(x, y, p)
    X = np.atleast_2d(x)
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    Y = np.zeros((len(y), p.Z))
    Y[np.arange(len(y)), y] = 1.0
    err = np.sqrt(((X - np.atleast_2d(xt)) ** 2).sum(axis=1)
                  + ((Y - np.atleast_2d(yt)) ** 2).sum(axis=1))
    return float(err[0]) if x.ndim == 1 else err


def error_from_parts(x, y_onehot, xt, yt) -> float:
    x, y_onehot, xt, yt = (np.asarray(a, dtype=float) for a in (x, y_onehot, xt, yt))
    return float(np.sqrt(((x - xt) ** 2).sum() + ((y_onehot - yt) ** 2).sum()))


@dataclass(frozen=True)
class ReconstructionRecord:
    t: int
    per_class_error: np.ndarray  # NaN where the class is absent
    presence: np.ndarray

    def present(self) -> np.ndarray:
        return np.flatnonzero(self.presence > 0)


def class_means(errors: np.ndarray, y: np.ndarray, Z: int):
    counts = np.bincount(y, minlength=Z)
    sums = np.bincount(y, weights=errors, minlength=Z)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return mean, counts


def batch_class_error(batch: MiniBatch, p: RbmParameters, X=None) -> ReconstructionRecord:
    """Mean reconstruction error per class present in the batch.

    ``X`` supplies already-normalized features; otherwise the batch features
    are used as they are.
    """
    X = batch.X if X is None else X
    y = batch.y
    mean, counts = class_means(reconstruction_error(X, y, p), y, p.Z)
    return ReconstructionRecord(batch.t, mean, counts)


@dataclass(frozen=True)
class DriftReport:
    t: int
    decisions: dict          # class -> "stable" | "drift"
    statistics: dict         # class -> Granger F
    p_values: dict           # class -> Granger p-value
    classes_tested: tuple

    @property
    def drifted(self) -> tuple:
        return tuple(m for m, d in sorted(self.decisions.items()) if d == "drift")

    @property
    def drift(self) -> bool:
        return bool(self.drifted)

    def log_rows(self, detector: str = "rbm-im"):
        for m in self.classes_tested:
            yield {"t": self.t, "detector": detector, "class": m,
                   "decision": self.decisions[m], "statistic": self.statistics[m],
                   "p_value": self.p_values[m]}


@dataclass
class DetectorConfig:
    """Decision settings of the per-class drift test."""

    lag: int = 1
    alpha: float = 0.05
    W_min: int = 8
    W_max: int = 200
    delta_w: float = 0.002
    gate_alpha: float = 3e-4
    gate_window: int | None = None  # None: the whole retained window
    rule: str = "gated"  # "gated" or "granger"

    def __post_init__(self):
        if self.lag < 1:
            raise ValueError("lag must be >= 1")
        if not 0 < self.alpha < 1 or not 0 < self.gate_alpha < 1:
            raise ValueError("significance levels must lie in (0, 1)")
        if self.rule not in ("gated", "granger"):
            raise ValueError(f"unknown rule {self.rule!r}")


class RbmImDetector:
    """Trainable per-class drift detector built on a class-balanced RBM.

    Call :meth:`warm_start` with the first mini-batch, then
    :meth:`process_batch` for every following one.
    """

    name = "rbm-im"

    def __init__(self, Z: int, hp: RbmHyperparams | None = None,
                 config: DetectorConfig | None = None, on_drift=None):
        self.Z = Z
        self.hp = hp or RbmHyperparams()
        self.config = config or DetectorConfig()
        self.on_drift = on_drift
        self.rng = np.random.default_rng(self.hp.seed)
        self.schema: StreamSchema | None = None
        self.params: RbmParameters | None = None
        self.stats = ClassStats(Z, self.hp.theta)
        self.tracker: TrendTracker | None = None

    @property
    def warm(self) -> bool:
        return self.params is not None

    def balance_state(self) -> ClassBalanceState:
        return ClassBalanceState.from_stats(self.stats, self.hp.beta)

    def warm_start(self, batch: MiniBatch) -> "RbmImDetector":
        if batch is None or len(batch) == 0:
            raise SetupError("warm start needs a non-empty batch")
        X = batch.X
        self.schema = StreamSchema.from_data(X, self.Z)
        self.params = rbm.init_parameters(self.schema, self.hp, self.rng)
        self.tracker = TrendTracker(
            self.Z, self.config.W_min, self.config.W_max, self.config.delta_w,
            self.config.lag)
        update_class_stats_batch(self.stats, batch.y)
        Xn = normalize(X, self.schema)
        for _ in range(self.hp.warm_epochs):
            self._train(Xn, batch.y)
        return self

    def _train(self, Xn, y):
        g = rbm.batch_gradient((Xn, y), self.params, self.hp, self.balance_state(), self.rng)
        self.params = rbm.apply_update(self.params, g, self.hp.eta)

    def record(self, batch: MiniBatch) -> ReconstructionRecord:
        return batch_class_error(batch, self.params, X=normalize(batch.X, self.schema))

    def process_batch(self, batch: MiniBatch) -> DriftReport:
        if not self.warm:
            raise SetupError("detector used before warm start")
        Xn = normalize(batch.X, self.schema)
        rec = batch_class_error(batch, self.params, X=Xn)
        report = self.detect(rec)
        update_class_stats_batch(self.stats, batch.y)
        for _ in range(self.hp.epochs):
            self._train(Xn, batch.y)
        return report

    def detect(self, rec: ReconstructionRecord) -> DriftReport:
        """Trend bookkeeping and per-class decisions for one reconstruction record.

        Under the "gated" rule a Granger drift verdict only counts when the
        class's newest error also lies above the one-sided prediction bound
        (level ``gate_alpha``) of the trend fitted to its retained window.
        """
        cfg = self.config
        tr = self.tracker
        decisions, fstats, pvals, tested = {}, {}, {}, []
        for m in rec.present():
            m = int(m)
            r = float(rec.per_class_error[m])
            surprise = self._surprise(m, rec.t, r)
            update_trend(tr, m, rec.t, r)
            adaptive_window(tr, m)
            ct = tr[m]
            try:
                q = trend_slope(tr, m)
            except InsufficientData:
                continue
            ct.trend_series.append(q)
            if len(ct.trend_series) < ct.trend_series.maxlen:
                continue
            res = granger_drift_test(list(ct.trend_series), cfg.lag, cfg.alpha)
            if res.decision == "insufficient":
                continue
            tested.append(m)
            fstats[m], pvals[m] = res.statistic, res.p_value
            drift = res.decision == "drift"
            if cfg.rule == "gated":
                drift = drift and surprise < cfg.gate_alpha
            decisions[m] = "drift" if drift else "stable"
            if drift:
                tr.reset_class(m)
                if self.on_drift is not None:
                    self.on_drift(m)
        return DriftReport(rec.t, decisions, fstats, pvals, tuple(tested))

    def _surprise(self, m: int, t: int, r: float) -> float:
        try:
            return prediction_pvalue(self.tracker, m, t, r, self.config.gate_window)
        except InsufficientData:
            return 1.0
