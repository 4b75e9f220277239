"""Reference drift detectors driven by classifier outcomes: FHDDM, DDM-OCI, PerfSim."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np


def fhddm_epsilon(window_size: int, delta: float) -> float:
    return math.sqrt(math.log(1.0 / delta) / (2.0 * window_size))


@dataclass
class FhddmState:
    """Sliding window of correctness bits and the best windowed accuracy so far."""

    window_size: int = 25
    delta: float = 1e-6
    window: deque = field(default=None)
    p_max: float = 0.0

    def __post_init__(self):
        if self.window_size < 1:
            raise ValueError("window size must be >= 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.window is None:
            self.window = deque(maxlen=self.window_size)

    @property
    def epsilon(self) -> float:
        return fhddm_epsilon(self.window_size, self.delta)

    def accuracy(self) -> float:
        return sum(self.window) / len(self.window) if self.window else math.nan

    def reset(self):
        self.window.clear()
        self.p_max = 0.0


def fhddm_update(s: FhddmState, correct: bool) -> bool:
    """Feed one correctness bit; True means drift (the state is then reset)."""
    s.window.append(1 if correct else 0)
    if len(s.window) < s.window_size:
        return False
    p = s.accuracy()
    if p > s.p_max:
        s.p_max = p
    if s.p_max - p >= s.epsilon:
        s.reset()
        return True
    return False


@dataclass
class DdmOciState:
    """Per-class decayed recall with its best value and a binomial spread."""

    Z: int
    alpha_d: float = 0.9
    alpha_w: float = 0.95
    theta_r: float = 0.99
    min_count: float = 30.0
    hits: np.ndarray = field(default=None)
    counts: np.ndarray = field(default=None)
    r_max: np.ndarray = field(default=None)
    s_max: np.ndarray = field(default=None)
    warning: np.ndarray = field(default=None)

    def __post_init__(self):
        if not 0 < self.alpha_d <= self.alpha_w <= 1:
            raise ValueError("need 0 < alpha_d <= alpha_w <= 1")
        if not 0 < self.theta_r < 1:
            raise ValueError("theta_r must lie in (0, 1)")
        for name in ("hits", "counts", "r_max", "s_max"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.Z))
        if self.warning is None:
            self.warning = np.zeros(self.Z, dtype=bool)

    def recall(self, m: int) -> float:
        n = self.counts[m]
        return self.hits[m] / n if n > 0 else math.nan

    def spread(self, m: int) -> float:
        r = self.recall(m)
        return math.sqrt(r * (1.0 - r) / self.counts[m]) if self.counts[m] > 0 else math.nan

    def reset_class(self, m: int):
        self.hits[m] = self.counts[m] = self.r_max[m] = self.s_max[m] = 0.0
        self.warning[m] = False


def ddm_oci_update(s: DdmOciState, predicted: int, actual: int) -> int | None:
    """Feed one prediction; returns the drifting class id or None.

    Only the recall of ``actual`` moves, so only that class is tested. A
    class is tested once its decayed count reaches ``min_count``.
    """
    m = int(actual)
    s.hits[m] = s.theta_r * s.hits[m] + (1.0 if predicted == actual else 0.0)
    s.counts[m] = s.theta_r * s.counts[m] + 1.0
    if s.counts[m] < s.min_count:
        return None
    r, sd = s.recall(m), s.spread(m)
    if r + sd > s.r_max[m] + s.s_max[m]:
        s.r_max[m], s.s_max[m] = r, sd
    s.warning[m] = r + sd < s.r_max[m] * s.alpha_w
    if r + sd < s.r_max[m] * s.alpha_d:
        s.reset_class(m)
        return m
    return None


def perfsim_weights(Z: int, lam: float) -> np.ndarray:
    """Entry weights: ``lam`` on the diagonal, ``1 - lam`` elsewhere."""
    g = np.full((Z, Z), 1.0 - lam)
    np.fill_diagonal(g, lam)
    return g


def weighted_cosine(a: np.ndarray, b: np.ndarray, g: np.ndarray) -> float:
    """Cosine similarity under the inner product sum(g * a * b); NaN if either side is zero."""
    na = float(np.sum(g * a * a))
    nb = float(np.sum(g * b * b))
    if na <= 0 or nb <= 0:
        return math.nan
    return float(np.sum(g * a * b)) / math.sqrt(na * nb)


@dataclass
class PerfSimState:
    """Confusion matrices of the previous and the current window of batches."""

    Z: int
    lam: float = 0.2
    tau: float = 0.95
    window_batches: int = 1
    previous: np.ndarray | None = None
    current: np.ndarray = field(default=None)
    filled: int = 0
    last_similarity: float = math.nan

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise ValueError("lambda must lie in (0, 1)")
        if self.window_batches < 1:
            raise ValueError("window_batches must be >= 1")
        if self.current is None:
            self.current = np.zeros((self.Z, self.Z))


def confusion_matrix(y_true, y_pred, Z: int) -> np.ndarray:
    """Counts with rows indexed by the true class and columns by the prediction."""
    cm = np.zeros((Z, Z))
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1.0)
    return cm


def perfsim_update(s: PerfSimState, confusion: np.ndarray) -> bool | None:
    """Add one batch confusion matrix.

    Returns None while the current window is still filling or when either
    window is empty (no decision), otherwise the drift verdict. Windows roll
    after every decision.
    """
    confusion = np.asarray(confusion, dtype=float)
    if confusion.shape != (s.Z, s.Z):
        raise ValueError(f"expected a {s.Z}x{s.Z} confusion matrix, got {confusion.shape}")
    s.current = s.current + confusion
    s.filled += 1
    if s.filled < s.window_batches:
        return None
    prev, cur = s.previous, s.current
    s.previous, s.current, s.filled = cur, np.zeros_like(cur), 0
    if prev is None:
        return None
    sim = weighted_cosine(prev, cur, perfsim_weights(s.Z, s.lam))
    s.last_similarity = sim
    if math.isnan(sim):
        return None
    return sim < s.tau
