"""Prequential (test-then-train) evaluation with detector-driven classifier resets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable

import numpy as np

from . import baselines as bl
from .drift import DetectorConfig, RbmImDetector
from .rbm import RbmHyperparams
from .stream import ClassStats, MiniBatch, StreamSchema, normalize, update_class_stats

GLOBAL = "global"


class UndefinedMetric(ValueError):
    """The window does not contain enough classes for the metric."""


# -- metrics -----------------------------------------------------------------

class PrequentialWindow:
    """Ring of the most recent (scores, true label, predicted label) triples."""

    def __init__(self, Z: int, size: int = 1000):
        if size < 1:
            raise ValueError("window size must be >= 1")
        self.Z = Z
        self.size = size
        self._scores = np.zeros((size, Z))
        self._y = np.zeros(size, dtype=np.int64)
        self._pred = np.zeros(size, dtype=np.int64)
        self._n = 0
        self._pos = 0

    def __len__(self):
        return self._n

    def add(self, scores, y: int, pred: int):
        self._scores[self._pos] = scores
        self._y[self._pos] = y
        self._pred[self._pos] = pred
        self._pos = (self._pos + 1) % self.size
        self._n = min(self._n + 1, self.size)

    def arrays(self):
        """(scores, true, predicted) of the retained triples, oldest first."""
        if self._n < self.size:
            idx = np.arange(self._n)
        else:
            idx = (np.arange(self.size) + self._pos) % self.size
        return self._scores[idx], self._y[idx], self._pred[idx]


def pairwise_auc(pos: np.ndarray, neg: np.ndarray) -> float:
    """P(pos score > neg score) + 0.5 P(tie)."""
    neg = np.sort(neg)
    lo = np.searchsorted(neg, pos, side="left")
    hi = np.searchsorted(neg, pos, side="right")
    return float((lo.sum() + 0.5 * (hi - lo).sum()) / (pos.size * neg.size))


def hand_till_auc(S: np.ndarray, y: np.ndarray) -> float:
    """Average over unordered class pairs of the two one-vs-one column AUCs.

    For the pair (i, k), column i ranks class-i instances against class-k
    instances and column k does the reverse; their mean is the pair's score.
    """
    present = np.unique(y)
    if present.size < 2:
        raise UndefinedMetric("pmAUC needs at least two classes in the window")
    total = 0.0
    pairs = list(combinations(present.tolist(), 2))
    for i, k in pairs:
        si, sk = y == i, y == k
        a_ik = pairwise_auc(S[si, i], S[sk, i])
        a_ki = pairwise_auc(S[sk, k], S[si, k])
        total += 0.5 * (a_ik + a_ki)
    return total / len(pairs)


def pm_auc(window: PrequentialWindow) -> float:
    S, y, _ = window.arrays()
    return hand_till_auc(S, y)


def geometric_mean_recall(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    present = np.unique(y_true)
    if present.size == 0:
        raise UndefinedMetric("pmGM needs at least one instance")
    recalls = np.array([np.mean(y_pred[y_true == m] == m) for m in present])
    if np.any(recalls == 0):
        return 0.0
    return float(np.prod(recalls) ** (1.0 / recalls.size))


def pm_gm(window: PrequentialWindow) -> float:
    _, y, p = window.arrays()
    return geometric_mean_recall(y, p)


# -- base classifier ---------------------------------------------------------

@dataclass
class LinearClassifier:
    """Multiclass perceptron whose error updates are scaled by an inverse-prior cost."""

    Z: int
    d: int
    learning_rate: float = 0.1
    cost_cap: float = 100.0
    theta: float = 0.999
    W: np.ndarray = field(default=None)
    bias: np.ndarray = field(default=None)
    stats: ClassStats = field(default=None)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be > 0")
        if not self.cost_cap >= 1:
            raise ValueError("cost cap must be >= 1")
        if self.W is None:
            self.W = np.zeros((self.Z, self.d))
        if self.bias is None:
            self.bias = np.zeros(self.Z)
        if self.stats is None:
            self.stats = ClassStats(self.Z, self.theta)

    def costs(self) -> np.ndarray:
        p = self.stats.priors()
        with np.errstate(divide="ignore"):
            c = np.where(p > 0, p.max() / p, self.cost_cap)
        return np.minimum(c, self.cost_cap)

    def reset(self, m: int | None = None):
        """Zero one class's weights, or all of them when ``m`` is None."""
        if m is None:
            self.W[:] = 0.0
            self.bias[:] = 0.0
        else:
            self.W[m] = 0.0
            self.bias[m] = 0.0


def classifier_predict(c: LinearClassifier, x) -> tuple[int, np.ndarray]:
    scores = c.W @ np.asarray(x, dtype=float) + c.bias
    return int(np.argmax(scores)), scores  # argmax keeps the first maximum


def classifier_learn(c: LinearClassifier, x, y: int) -> LinearClassifier:
    x = np.asarray(x, dtype=float)
    update_class_stats(c.stats, y)
    pred, _ = classifier_predict(c, x)
    if pred != y:
        step = c.learning_rate * c.costs()[y]
        c.W[y] += step * x
        c.bias[y] += step
        c.W[pred] -= step * x
        c.bias[pred] -= step
    return c


# -- detector adapters -------------------------------------------------------

@dataclass
class Signal:
    """What a detector reports for one batch."""

    classes: tuple = ()
    is_global: bool = False
    rows: list = field(default_factory=list)

    @property
    def fired(self) -> bool:
        return self.is_global or bool(self.classes)


class NullDetector:
    name = "none"

    def start(self, batch: MiniBatch):
        pass

    def step(self, batch: MiniBatch, y_pred: np.ndarray) -> Signal:
        return Signal()


class OracleDetector:
    """Fires at the known drift batches; globally unless ``per_class``."""

    name = "oracle"

    def __init__(self, drift_batches: Iterable[int], affected: Iterable[int] = (),
                 per_class: bool = False):
        self.drift_batches = set(int(t) for t in drift_batches)
        self.affected = tuple(sorted(int(m) for m in affected))
        self.per_class = per_class

    def start(self, batch):
        pass

    def step(self, batch, y_pred) -> Signal:
        if batch.t not in self.drift_batches:
            return Signal()
        target = self.affected if self.per_class else ()
        rows = [_row(batch.t, self.name, m if self.per_class else GLOBAL, "drift")
                for m in (target or (None,))]
        return Signal(classes=target, is_global=not self.per_class, rows=rows)


class RbmImAdapter:
    name = "rbm-im"

    def __init__(self, Z: int, hp: RbmHyperparams | None = None,
                 config: DetectorConfig | None = None):
        self.detector = RbmImDetector(Z, hp, config)

    def start(self, batch):
        self.detector.warm_start(batch)

    def step(self, batch, y_pred) -> Signal:
        rep = self.detector.process_batch(batch)
        return Signal(classes=rep.drifted, rows=list(rep.log_rows(self.name)))


class FhddmAdapter:
    name = "fhddm"

    def __init__(self, Z: int, window_size: int = 25, delta: float = 1e-6):
        self.state = bl.FhddmState(window_size, delta)

    def start(self, batch):
        pass

    def step(self, batch, y_pred) -> Signal:
        fired = False
        for y, p in zip(batch.y, y_pred):
            fired |= bl.fhddm_update(self.state, y == p)
        gap = self.state.p_max - self.state.accuracy() if self.state.window else math.nan
        row = _row(batch.t, self.name, GLOBAL, "drift" if fired else "stable", gap)
        return Signal(is_global=fired, rows=[row])


class DdmOciAdapter:
    name = "ddm-oci"

    def __init__(self, Z: int, alpha_d: float = 0.9, alpha_w: float = 0.95,
                 theta_r: float = 0.99, min_count: float = 30.0):
        self.state = bl.DdmOciState(Z, alpha_d, alpha_w, theta_r, min_count)

    def start(self, batch):
        pass

    def step(self, batch, y_pred) -> Signal:
        flagged = set()
        for y, p in zip(batch.y, y_pred):
            m = bl.ddm_oci_update(self.state, int(p), int(y))
            if m is not None:
                flagged.add(m)
        rows = []
        for m in sorted(set(batch.y.tolist()) | flagged):
            r = self.state.recall(m)
            stat = r + self.state.spread(m) if not math.isnan(r) else math.nan
            rows.append(_row(batch.t, self.name, m, "drift" if m in flagged else "stable", stat))
        return Signal(classes=tuple(sorted(flagged)), rows=rows)


class PerfSimAdapter:
    name = "perfsim"

    def __init__(self, Z: int, lam: float = 0.2, tau: float = 0.95, window_batches: int = 1):
        self.Z = Z
        self.state = bl.PerfSimState(Z, lam, tau, window_batches)

    def start(self, batch):
        pass

    def step(self, batch, y_pred) -> Signal:
        res = bl.perfsim_update(self.state, bl.confusion_matrix(batch.y, y_pred, self.Z))
        if res is None:
            return Signal()
        row = _row(batch.t, self.name, GLOBAL, "drift" if res else "stable",
                   self.state.last_similarity)
        return Signal(is_global=bool(res), rows=[row])


DETECTORS = {
    "none": NullDetector,
    "rbm-im": RbmImAdapter,
    "fhddm": FhddmAdapter,
    "ddm-oci": DdmOciAdapter,
    "perfsim": PerfSimAdapter,
}

_RBM_FIELDS = set(RbmHyperparams.__dataclass_fields__)
_DET_FIELDS = set(DetectorConfig.__dataclass_fields__)


def make_detector(name: str, Z: int, params: dict | None = None, seed: int = 0,
                  truth: tuple = ((), ())):
    """Build a detector adapter by name. ``truth`` = (drift batches, affected) feeds the oracle."""
    params = dict(params or {})
    if name == "oracle":
        return OracleDetector(truth[0], truth[1], **params)
    if name == "none":
        if params:
            raise ValueError("detector 'none' takes no parameters")
        return NullDetector()
    if name == "rbm-im":
        unknown = set(params) - _RBM_FIELDS - _DET_FIELDS
        if unknown:
            raise ValueError(f"unknown rbm-im parameters: {sorted(unknown)}")
        hp = RbmHyperparams(**{"seed": seed, **{k: v for k, v in params.items()
                                                 if k in _RBM_FIELDS}})
        cfg = DetectorConfig(**{k: v for k, v in params.items() if k in _DET_FIELDS})
        return RbmImAdapter(Z, hp, cfg)
    try:
        cls = DETECTORS[name]
    except KeyError:
        raise ValueError(f"unknown detector {name!r}") from None
    return cls(Z, **params)


def _row(t, detector, target, decision, statistic=math.nan, p_value=math.nan):
    return {"t": int(t), "detector": detector, "class": target, "decision": decision,
            "statistic": float(statistic), "p_value": float(p_value)}


# -- detection bookkeeping ---------------------------------------------------

@dataclass
class DetectionLog:
    """Detector decisions plus the ground truth they are scored against."""

    detector: str
    drift_batches: tuple = ()
    affected: tuple = ()
    n_batches: int = 0
    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)  # (t, classes tuple, is_global) per firing batch

    def record(self, t: int, sig: Signal):
        if self.events and t <= self.events[-1][0]:
            raise ValueError("detection times must increase")
        self.rows.extend(sig.rows)
        if sig.fired:
            self.events.append((int(t), tuple(sig.classes), bool(sig.is_global)))


@dataclass(frozen=True)
class DetectionMetrics:
    mean_delay: float
    false_alarms_per_100: float
    miss_rate: float
    attribution_precision: float
    attribution_recall: float
    hits: int
    false_alarms: int
    delays: tuple

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in self.__dict__.items()}


def detection_metrics(log: DetectionLog, horizon: int = 50) -> DetectionMetrics:
    """Score firing batches against the true drift batches.

    The first firing in [t_d, t_d + horizon) (cut short by the next drift) is
    a hit with delay t - t_d; firings outside every horizon are false alarms.
    Attribution compares classes flagged inside horizons to the affected
    classes; it is NaN when nothing class-specific was flagged there.
    """
    drifts = sorted(log.drift_batches)
    ends = [min(t + horizon, drifts[i + 1]) if i + 1 < len(drifts) else t + horizon
            for i, t in enumerate(drifts)]
    affected = set(log.affected)
    delays, false_alarms = [], 0
    hit = [False] * len(drifts)
    tp = fp = 0
    recalled: set = set()
    for t, classes, _ in log.events:
        k = next((i for i, (a, b) in enumerate(zip(drifts, ends)) if a <= t < b), None)
        if k is None:
            false_alarms += 1
            continue
        if not hit[k]:
            hit[k] = True
            delays.append(t - drifts[k])
        for m in classes:
            if m in affected:
                tp += 1
                recalled.add(m)
            else:
                fp += 1
    n_hits = sum(hit)
    return DetectionMetrics(
        mean_delay=float(np.mean(delays)) if delays else math.nan,
        false_alarms_per_100=100.0 * false_alarms / log.n_batches if log.n_batches else math.nan,
        miss_rate=1.0 - n_hits / len(drifts) if drifts else math.nan,
        attribution_precision=tp / (tp + fp) if tp + fp else math.nan,
        attribution_recall=len(recalled) / len(affected) if affected and tp + fp else math.nan,
        hits=n_hits, false_alarms=false_alarms, delays=tuple(delays))


# -- the prequential loop ----------------------------------------------------

@dataclass
class RunResult:
    metrics: list      # rows: batch, pmAUC, pmGM, drift flags
    log: DetectionLog


def _flags(sig: Signal) -> str:
    if sig.is_global:
        return GLOBAL
    return ";".join(str(m) for m in sig.classes)


def run_prequential(batches: Iterable[MiniBatch], detector, Z: int,
                    classifier: dict | None = None, window: int = 1000,
                    drift_batches: Iterable[int] = (), affected: Iterable[int] = ()) -> RunResult:
    """Test-then-train over mini-batches with a drift detector steering resets.

    Every instance is predicted, recorded and learned. The first batch warm
    starts the detector; later batches are passed to it after the classifier
    has seen them. A global signal resets the whole classifier, a per-class
    signal only the flagged classes. Metrics are sampled once per batch.
    """
    log = DetectionLog(detector.name, tuple(sorted(drift_batches)), tuple(sorted(affected)))
    win = PrequentialWindow(Z, window)
    clf = None
    schema = None
    rows = []
    for batch in batches:
        if schema is None:
            schema = StreamSchema.from_data(batch.X, Z)
            clf = LinearClassifier(Z, schema.d, **(classifier or {}))
        Xn = normalize(batch.X, schema)
        preds = np.empty(len(batch), dtype=np.int64)
        for i, (x, y) in enumerate(zip(Xn, batch.y)):
            pred, scores = classifier_predict(clf, x)
            win.add(scores, y, pred)
            preds[i] = pred
            classifier_learn(clf, x, int(y))
        if log.n_batches == 0:
            detector.start(batch)
            sig = Signal()
        else:
            sig = detector.step(batch, preds)
            log.record(batch.t, sig)
            if sig.is_global:
                clf.reset()
            else:
                for m in sig.classes:
                    clf.reset(m)
        log.n_batches += 1
        rows.append({"batch": batch.t, "pmAUC": _safe(pm_auc, win),
                     "pmGM": _safe(pm_gm, win), "drift": _flags(sig)})
    if schema is None:
        raise ValueError("stream yielded no batches")
    return RunResult(rows, log)


def _safe(metric, win) -> float:
    try:
        return metric(win)
    except UndefinedMetric:
        return math.nan
