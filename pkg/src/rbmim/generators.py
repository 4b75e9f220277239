"""Synthetic multi-class imbalanced streams with controllable concept drift.

Two concept families are provided:

* ``hyperplane``: features uniform on [0, 1]^d, the class is the slab of
  ``normal . (x - 0.5)`` the point falls into. Drift rotates the normal.
* ``rbf``: each class is a mixture of isotropic Gaussian blobs. Drift
  translates every blob of a class by a per-class offset.

Classes are drawn from a (possibly time-varying) prior first and features are
drawn class-conditionally, so imbalance and drift are controlled separately.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.special import ndtri

from .stream import Instance

DRIFT_KINDS = ("none", "sudden", "gradual", "incremental", "virtual")
FAMILIES = ("hyperplane", "rbf")


class ScheduleError(ValueError):
    pass


class ConfigError(ValueError):
    pass


# -- concepts ------------------------------------------------------------------

@dataclass(frozen=True)
class Concept:
    kind: str
    d: int
    Z: int
    # hyperplane
    normal: np.ndarray | None = None
    edges: np.ndarray | None = None
    # rbf: centroids (Z, n_c, d), spreads (Z, n_c), weights (Z, n_c)
    centroids: np.ndarray | None = None
    spreads: np.ndarray | None = None
    weights: np.ndarray | None = None
    # within-class feature translation (virtual drift); (Z, d)
    shift: np.ndarray | None = None
    shrink: float = 0.0

    def blend(self, other: "Concept", alpha: float) -> "Concept":
        """Linear interpolation of all numeric parameters."""
        if alpha <= 0.0:
            return self
        if alpha >= 1.0:
            return other
        kw = {}
        for f in ("normal", "edges", "centroids", "spreads", "shift"):
            x0, x1 = getattr(self, f), getattr(other, f)
            if x0 is not None:
                kw[f] = (1.0 - alpha) * x0 + alpha * x1
        kw["shrink"] = (1.0 - alpha) * self.shrink + alpha * other.shrink
        return dataclasses.replace(self, **kw)

    # hyperplane ---------------------------------------------------------------
    def region(self, X: np.ndarray) -> np.ndarray:
        s = (X - 0.5) @ self.normal
        return np.searchsorted(self.edges, s, side="right")

    def _hyperplane_candidates(self, label, rng, n):
        U = rng.random((n, self.d))
        if self.shift is not None and self.shrink > 0:
            # translate the sampling box towards a per-class anchor point
            U = U * (1.0 - self.shrink) + self.shrink * self.shift[label]
        return U

    def sample(self, label: int, rng) -> np.ndarray:
        if self.kind == "hyperplane":
            block = 4 * self.Z
            for _ in range(10_000):
                X = self._hyperplane_candidates(label, rng, block)
                hit = np.flatnonzero(self.region(X) == label)
                if hit.size:
                    return X[hit[0]]
            raise RuntimeError(f"class {label} region is empty")
        w = self.weights[label]
        i = int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right"))
        i = min(i, len(w) - 1)
        x = self.centroids[label, i] + rng.normal(0.0, self.spreads[label, i], self.d)
        if self.shift is not None:
            x = x + self.shift[label]
        return x

    def class_mean(self, label: int) -> np.ndarray:
        """Exact feature mean of an rbf class."""
        w = self.weights[label] / self.weights[label].sum()
        m = w @ self.centroids[label]
        if self.shift is not None:
            m = m + self.shift[label]
        return m


def make_hyperplane(d: int, Z: int, rng) -> Concept:
    normal = rng.normal(size=d)
    normal /= np.linalg.norm(normal)
    # equal-mass slabs under the CLT approximation: s ~ N(0, 1/12)
    q = np.arange(1, Z) / Z
    edges = ndtri(q) * np.sqrt(1.0 / 12.0)
    return Concept("hyperplane", d, Z, normal=normal, edges=edges)


def make_rbf(d: int, Z: int, rng, n_centroids: int = 2,
             spread: tuple[float, float] = (0.04, 0.08)) -> Concept:
    centroids = rng.random((Z, n_centroids, d))
    spreads = rng.uniform(*spread, size=(Z, n_centroids))
    weights = rng.uniform(0.5, 1.0, size=(Z, n_centroids))
    weights /= weights.sum(axis=1, keepdims=True)
    return Concept("rbf", d, Z, centroids=centroids, spreads=spreads, weights=weights)


def make_concept(family: str, d: int, Z: int, rng) -> Concept:
    if family == "hyperplane":
        return make_hyperplane(d, Z, rng)
    if family == "rbf":
        return make_rbf(d, Z, rng)
    raise ConfigError(f"unknown concept family {family!r}")


def _reflect(x):
    # fold onto [0, 1] the way a point bouncing off the cube walls would land
    x = np.mod(x, 2.0)
    return np.where(x > 1.0, 2.0 - x, x)


def drifted(c: Concept, rng, magnitude: float = 1.0, rotation: float = 1.0) -> Concept:
    """Real drift: a new concept of the same family.

    rbf: every class is translated by its own random offset of norm
    ``magnitude`` and reflected back into the unit cube. hyperplane: the
    normal is rotated by ``rotation`` radians towards a random orthogonal
    direction.
    """
    if c.kind == "rbf":
        off = rng.normal(size=(c.Z, c.d))
        off *= magnitude / np.linalg.norm(off, axis=1, keepdims=True)
        return dataclasses.replace(c, centroids=_reflect(c.centroids + off[:, None, :]))
    r = rng.normal(size=c.d)
    r -= (r @ c.normal) * c.normal
    r /= np.linalg.norm(r)
    normal = np.cos(rotation) * c.normal + np.sin(rotation) * r
    return dataclasses.replace(c, normal=normal)


def virtual_shifted(c: Concept, rng, magnitude: float = 0.3) -> Concept:
    """Virtual drift: move where features of each class concentrate, keep the labelling rule."""
    if c.kind == "rbf":
        off = rng.normal(size=(c.Z, c.d))
        scale = magnitude * c.spreads.mean(axis=1, keepdims=True) * np.sqrt(c.d)
        off *= scale / np.linalg.norm(off, axis=1, keepdims=True)
        base = np.zeros((c.Z, c.d)) if c.shift is None else c.shift
        return dataclasses.replace(c, shift=base + off)
    anchors = rng.random((c.Z, c.d))
    # zero-strength anchors on the old side so blends are exact at both ends
    return dataclasses.replace(c, shift=anchors, shrink=magnitude)


# -- schedules -----------------------------------------------------------------

@dataclass(frozen=True)
class DriftSchedule:
    kind: str = "none"
    t1: int = 0
    t2: int = 0
    affected_classes: tuple[int, ...] | None = None  # None = global

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ScheduleError(f"unknown drift kind {self.kind!r}")
        if self.t1 > self.t2:
            raise ScheduleError("t1 must not exceed t2")
        if self.kind != "none" and self.affected_classes is not None \
                and len(self.affected_classes) == 0:
            raise ScheduleError("affected_classes must be non-empty")

    def affects(self, label: int) -> bool:
        return self.affected_classes is None or label in self.affected_classes


def mixing_coefficient(j: int, t1: int, t2: int) -> float:
    if t1 == t2:
        raise ScheduleError("t1 == t2: use a sudden drift instead")
    return min(1.0, max(0.0, (j - t1) / (t2 - t1)))


def active_concept(j: int, sched: DriftSchedule, rng) -> float:
    """Weight of the new concept at index ``j``: 0 = old, 1 = new, between = blend.

    Gradual drift returns 0 or 1 (a coin flipped against the mixing coefficient);
    incremental drift returns the mixing coefficient itself.
    """
    kind = sched.kind
    if kind == "none":
        return 0.0
    if kind in ("sudden", "virtual") or sched.t1 == sched.t2:
        return 1.0 if j >= sched.t1 else 0.0
    if j < sched.t1:
        return 0.0
    if j >= sched.t2:
        return 1.0
    alpha = mixing_coefficient(j, sched.t1, sched.t2)
    if kind == "incremental":
        return alpha
    return 1.0 if rng.random() <= alpha else 0.0


def geometric_priors(Z: int, ir: float) -> np.ndarray:
    """Priors decaying geometrically from class 0 to class Z-1 with max/min = ir."""
    if Z < 2:
        raise ConfigError("class count must be ≥ 2")
    if ir < 1:
        raise ConfigError("imbalance ratio must be >= 1")
    p = float(ir) ** (-np.arange(Z) / (Z - 1))
    return p / p.sum()


@dataclass(frozen=True)
class ImbalanceSchedule:
    """Piecewise-linear class-prior trajectories plus role-swap events.

    ``knots`` are (index, priors) pairs sorted by index; priors are held
    constant before the first and after the last knot. ``swaps`` are
    (index, a, b) events exchanging the priors of classes a and b from that
    index on.
    """

    knots: tuple[tuple[int, tuple[float, ...]], ...]
    swaps: tuple[tuple[int, int, int], ...] = ()

    def __post_init__(self):
        if not self.knots:
            raise ScheduleError("at least one knot required")
        idx = [k[0] for k in self.knots]
        if idx != sorted(idx):
            raise ScheduleError("knots must be sorted by index")
        Z = len(self.knots[0][1])
        for _, pr in self.knots:
            pr = np.asarray(pr)
            if len(pr) != Z or (pr < 0).any() or abs(pr.sum() - 1.0) > 1e-9:
                raise ScheduleError("each knot must be a probability vector")
        for _, a, b in self.swaps:
            if not (0 <= a < Z and 0 <= b < Z):
                raise ScheduleError("swap classes out of range")

    @property
    def Z(self) -> int:
        return len(self.knots[0][1])

    @classmethod
    def static(cls, priors: Sequence[float], swaps=()) -> "ImbalanceSchedule":
        pr = np.asarray(priors, dtype=float)
        return cls(((0, tuple((pr / pr.sum()).tolist())),), tuple(swaps))

    @classmethod
    def triangle(cls, Z: int, ir_max: float, length: int, ir_min: float = 1.0,
                 swaps=()) -> "ImbalanceSchedule":
        """IR starts at ``ir_max``, falls to ``ir_min`` mid-stream, climbs back."""
        hi = tuple(geometric_priors(Z, ir_max).tolist())
        lo = tuple(geometric_priors(Z, ir_min).tolist())
        return cls(((0, hi), (length // 2, lo), (length, hi)), tuple(swaps))

    def priors(self, j: int) -> np.ndarray:
        idx = [k[0] for k in self.knots]
        if j <= idx[0] or len(idx) == 1:
            p = np.array(self.knots[0][1])
        elif j >= idx[-1]:
            p = np.array(self.knots[-1][1])
        else:
            i = int(np.searchsorted(idx, j, side="right")) - 1
            (j0, p0), (j1, p1) = self.knots[i], self.knots[i + 1]
            a = (j - j0) / (j1 - j0)
            p = (1.0 - a) * np.array(p0) + a * np.array(p1)
        for js, a_, b_ in self.swaps:
            if j >= js:
                p[a_], p[b_] = p[b_], p[a_]
        return p / p.sum()


def sample_label(priors: np.ndarray, rng) -> int:
    i = int(np.searchsorted(np.cumsum(priors), rng.random(), side="right"))
    return min(i, len(priors) - 1)


def sample_instance(j: int, concepts: tuple[Concept, Concept], drift: DriftSchedule,
                    imb: ImbalanceSchedule, rng) -> Instance:
    label = sample_label(imb.priors(j), rng)
    old, new = concepts
    alpha = active_concept(j, drift, rng) if drift.affects(label) else 0.0
    concept = old.blend(new, alpha)
    return Instance(concept.sample(label, rng), label, j)


# -- generators ----------------------------------------------------------------

@dataclass(frozen=True)
class StreamGenerator:
    """Lazy, seeded, re-iterable instance stream."""

    family: str
    d: int
    Z: int
    length: int
    drift: DriftSchedule
    imbalance: ImbalanceSchedule
    seed: int = 0
    magnitude: float | None = None
    concepts: tuple[Concept, Concept] = field(default=None, compare=False)

    def __post_init__(self):
        if self.Z < 2:
            raise ConfigError("class count must be ≥ 2")
        if self.d < 1:
            raise ConfigError("feature count must be >= 1")
        if self.imbalance.Z != self.Z:
            raise ConfigError("imbalance schedule class count mismatch")
        if self.concepts is None:
            crng = np.random.default_rng([self.seed, 1])
            d0 = make_concept(self.family, self.d, self.Z, crng)
            if self.drift.kind == "virtual":
                d1 = virtual_shifted(d0, crng)
                if d0.kind == "hyperplane":
                    d0 = dataclasses.replace(d0, shift=d1.shift, shrink=0.0)
                else:
                    d0 = dataclasses.replace(d0, shift=np.zeros_like(d1.shift))
            else:
                d1 = drifted(d0, crng, magnitude=self.drift_magnitude)
            object.__setattr__(self, "concepts", (d0, d1))

    @property
    def drift_magnitude(self) -> float:
        # default: expected distance between two uniform random centroids
        return math.sqrt(self.d / 6.0) if self.magnitude is None else self.magnitude

    def __iter__(self) -> Iterator[Instance]:
        rng = np.random.default_rng([self.seed, 2])
        for j in range(self.length):
            yield sample_instance(j, self.concepts, self.drift, self.imbalance, rng)

    def __len__(self):
        return self.length

    def drift_points(self) -> list[int]:
        """Instance indices at which a real or virtual drift begins."""
        if self.drift.kind == "none" or self.drift.t1 >= self.length:
            return []
        return [self.drift.t1]

    def affected(self) -> tuple[int, ...]:
        if self.drift.kind == "none":
            return ()
        if self.drift.affected_classes is None:
            return tuple(range(self.Z))
        return tuple(self.drift.affected_classes)

    def replace(self, **kw) -> "StreamGenerator":
        # concepts are a pure function of the seed and shape; rebuild them
        kw.setdefault("concepts", None)
        return dataclasses.replace(self, **kw)


TABLE1 = {
    # Z: (d, max IR) for the artificial benchmark families
    5: (20, 100.0),
    10: (40, 200.0),
    20: (80, 300.0),
}


def make_benchmark(name: str, Z: int | None = None, d: int | None = None,
                   ir: float | None = None, drift: str | None = None,
                   length: int = 1_000_000, seed: int = 0, t1: int | None = None,
                   t2: int | None = None, ir_profile: str = "triangle",
                   magnitude: float | None = None) -> StreamGenerator:
    """Artificial benchmark family shaped like hyperplane5/10/20 and rbf5/10/20.

    ``name`` is a family name optionally suffixed by the class count. Anything
    passed explicitly overrides the family defaults.
    """
    fam = name.rstrip("0123456789").lower()
    if fam not in FAMILIES:
        raise ConfigError(f"unknown benchmark {name!r}")
    suffix = name[len(fam):]
    if Z is None:
        Z = int(suffix) if suffix else 5
    if Z < 2:
        raise ConfigError("class count must be ≥ 2")
    d0, ir0 = TABLE1.get(Z, (4 * Z, 100.0))
    d = d0 if d is None else d
    ir = ir0 if ir is None else ir
    drift = drift or ("gradual" if fam == "hyperplane" else "sudden")
    if drift not in DRIFT_KINDS:
        raise ConfigError(f"unknown drift kind {drift!r}")
    t1 = length // 2 if t1 is None else t1
    if t2 is None:
        t2 = t1 + max(1, length // 20) if drift in ("gradual", "incremental") else t1
    if ir_profile == "triangle":
        imb = ImbalanceSchedule.triangle(Z, ir, length)
    elif ir_profile == "static":
        imb = ImbalanceSchedule.static(geometric_priors(Z, ir))
    else:
        raise ConfigError(f"unknown ir_profile {ir_profile!r}")
    sched = DriftSchedule(drift, t1, t2)
    return StreamGenerator(fam, d, Z, length, sched, imb, seed, magnitude)


def inject_local_drift(gen: StreamGenerator, c: int) -> StreamGenerator:
    """Restrict drift to the ``c`` smallest classes (by prior at drift onset)."""
    if not 1 <= c <= gen.Z:
        raise ConfigError(f"affected count must lie in [1, {gen.Z}]")
    pr = gen.imbalance.priors(gen.drift.t1)
    order = np.argsort(pr, kind="stable")
    affected = tuple(int(i) for i in order[:c])
    return gen.replace(drift=dataclasses.replace(gen.drift, affected_classes=affected))


def generator_from_config(cfg: dict) -> StreamGenerator:
    """Build a generator from a declarative mapping.

    Keys: family (or benchmark), Z, d, ir, ir_profile (static|triangle),
    drift, t1, t2, affected (count of smallest classes), swaps
    ([[index, a, b], ...]), seed, length, magnitude.
    """
    cfg = dict(cfg)
    known = {"family", "benchmark", "Z", "d", "ir", "ir_profile", "drift", "t1", "t2",
             "affected", "swaps", "seed", "length", "magnitude"}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown generator keys: {sorted(unknown)}")
    name = cfg.get("benchmark") or cfg.get("family")
    if not name:
        raise ConfigError("generator needs 'family' or 'benchmark'")
    gen = make_benchmark(
        str(name), Z=cfg.get("Z"), d=cfg.get("d"), ir=cfg.get("ir"),
        drift=cfg.get("drift"), length=int(cfg.get("length", 100_000)),
        seed=int(cfg.get("seed", 0)), t1=cfg.get("t1"), t2=cfg.get("t2"),
        ir_profile=cfg.get("ir_profile", "triangle"),
        magnitude=cfg.get("magnitude"))
    if cfg.get("swaps"):
        swaps = tuple((int(j), int(a), int(b)) for j, a, b in cfg["swaps"])
        gen = gen.replace(imbalance=dataclasses.replace(gen.imbalance, swaps=swaps))
    if cfg.get("affected") is not None and gen.drift.kind != "none":
        gen = inject_local_drift(gen, int(cfg["affected"]))
    return gen
