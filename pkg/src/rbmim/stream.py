"""Stream data model: instances, mini-batches, schemas and class bookkeeping."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np


class SchemaError(ValueError):
    """Raised when data does not conform to a stream schema."""


@dataclass(frozen=True)
class Instance:
    features: np.ndarray
    label: int
    seq: int


@dataclass(frozen=True)
class MiniBatch:
    t: int
    instances: tuple[Instance, ...]

    def __post_init__(self):
        if not self.instances:
            raise SchemaError("a mini-batch must hold at least one instance")

    def __len__(self):
        return len(self.instances)

    @property
    def X(self) -> np.ndarray:
        return np.vstack([inst.features for inst in self.instances])

    @property
    def y(self) -> np.ndarray:
        return np.fromiter((inst.label for inst in self.instances), dtype=np.int64,
                           count=len(self.instances))


@dataclass(frozen=True)
class StreamSchema:
    d: int
    Z: int
    feature_ranges: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.d < 1:
            raise SchemaError("feature count must be >= 1")
        if self.Z < 2:
            raise SchemaError("class count must be ≥ 2")
        if self.feature_ranges and len(self.feature_ranges) != self.d:
            raise SchemaError(
                f"expected {self.d} feature ranges, got {len(self.feature_ranges)}")
        for lo, hi in self.feature_ranges:
            if not lo < hi:
                raise SchemaError(f"degenerate feature range ({lo}, {hi})")

    @classmethod
    def from_data(cls, X: np.ndarray, Z: int) -> "StreamSchema":
        """Fix per-feature ranges from a block of raw rows.

        Constant columns get a range of width one starting at their value, so
        they normalize to zero.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lo = X.min(axis=0)
        hi = X.max(axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)
        return cls(d=X.shape[1], Z=Z,
                   feature_ranges=tuple(zip(lo.tolist(), hi.tolist())))

    @property
    def lows(self) -> np.ndarray:
        return np.array([r[0] for r in self.feature_ranges], dtype=float)

    @property
    def widths(self) -> np.ndarray:
        return np.array([r[1] - r[0] for r in self.feature_ranges], dtype=float)


def normalize(raw, schema: StreamSchema) -> np.ndarray:
    """Min-max scale raw features into [0, 1] using the schema's fixed ranges.

    Accepts a single row of length d or a 2-D block of rows.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape[-1] != schema.d:
        raise SchemaError(f"expected {schema.d} features, got {raw.shape[-1]}")
    if not schema.feature_ranges:
        raise SchemaError("schema has no feature ranges")
    return np.clip((raw - schema.lows) / schema.widths, 0.0, 1.0)


def one_hot(label: int, Z: int) -> np.ndarray:
    if not 0 <= label < Z:
        raise ValueError(f"label {label} outside [0, {Z})")
    out = np.zeros(Z)
    out[label] = 1.0
    return out


@dataclass
class ClassStats:
    """Raw and exponentially decayed per-class counts."""

    Z: int
    theta: float = 0.999
    counts: np.ndarray = field(default=None)
    decayed_counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("decay factor must lie in (0, 1]")
        if self.counts is None:
            self.counts = np.zeros(self.Z, dtype=np.int64)
        if self.decayed_counts is None:
            self.decayed_counts = np.zeros(self.Z)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def imbalance_ratio(self) -> float:
        seen = self.counts[self.counts > 0]
        if seen.size == 0:
            return float("nan")
        return float(seen.max() / seen.min())

    def priors(self) -> np.ndarray:
        """Decayed class frequencies; uniform before anything is seen."""
        s = self.decayed_counts.sum()
        if s <= 0:
            return np.full(self.Z, 1.0 / self.Z)
        return self.decayed_counts / s

    def copy(self) -> "ClassStats":
        return ClassStats(self.Z, self.theta, self.counts.copy(),
                          self.decayed_counts.copy())


def update_class_stats(stats: ClassStats, label: int) -> ClassStats:
    """Record one label in place and return ``stats``."""
    if not 0 <= label < stats.Z:
        raise ValueError(f"label {label} outside [0, {stats.Z})")
    stats.counts[label] += 1
    stats.decayed_counts *= stats.theta
    stats.decayed_counts[label] += 1.0
    return stats


def update_class_stats_batch(stats: ClassStats, labels: Iterable[int]) -> ClassStats:
    for y in labels:
        update_class_stats(stats, int(y))
    return stats


def batches(instances: Iterable[Instance], n: int, start: int = 0) -> Iterator[MiniBatch]:
    """Group an instance stream into consecutive mini-batches of size ``n``.

    A trailing partial batch is emitted if non-empty.
    """
    if n < 1:
        raise ValueError("batch size must be >= 1")
    buf: list[Instance] = []
    t = start
    for inst in instances:
        buf.append(inst)
        if len(buf) == n:
            yield MiniBatch(t, tuple(buf))
            buf = []
            t += 1
    if buf:
        yield MiniBatch(t, tuple(buf))


def read_csv(path, Z: int | None = None, delimiter: str = ",",
             header: bool | None = None) -> Iterator[Instance]:
    """Lazily read ``d`` numeric columns followed by an integer label column.

    ``header=None`` sniffs the first row: it is a header if any feature cell
    fails to parse as a number.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        d = None
        seq = 0
        for lineno, row in enumerate(reader):
            if not row:
                continue
            if lineno == 0 and header is not False:
                if header or not _numeric_row(row):
                    continue
            if d is None:
                d = len(row) - 1
                if d < 1:
                    raise SchemaError(f"{path}: need at least one feature column")
            if len(row) != d + 1:
                raise SchemaError(
                    f"{path}:{lineno + 1}: expected {d + 1} columns, got {len(row)}")
            try:
                x = np.array([float(v) for v in row[:-1]])
                y = int(float(row[-1]))
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno + 1}: {exc}") from None
            if y < 0 or (Z is not None and y >= Z):
                raise SchemaError(f"{path}:{lineno + 1}: label {y} out of range")
            yield Instance(x, y, seq)
            seq += 1


def _numeric_row(row: Sequence[str]) -> bool:
    try:
        for v in row:
            float(v)
    except ValueError:
        return False
    return True


def write_csv(path, instances: Iterable[Instance], delimiter: str = ",",
              header: bool = True) -> int:
    """Write instances in the row format read by :func:`read_csv`; returns the count."""
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        for inst in instances:
            if n == 0 and header:
                w.writerow([f"x{i}" for i in range(len(inst.features))] + ["label"])
            w.writerow([repr(float(v)) for v in inst.features] + [inst.label])
            n += 1
    return n
