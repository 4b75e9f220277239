"""Three-layer RBM (visible, hidden, class) trained with class-balanced CD-k.

Visible units receive min-max normalized features and are treated as
Bernoulli probabilities; the class layer is a softmax unit. Parameter layout:
``w`` is V x H, ``u`` is H x Z, biases ``a`` (V), ``b`` (H), ``c`` (Z).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .stream import ClassStats, MiniBatch, StreamSchema


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class RbmHyperparams:
    eta: float = 0.05
    k: int = 1
    batch_size: int = 50
    hidden_fraction: float = 0.5
    beta: float = 0.99
    seed: int = 0
    clip: float = 10.0
    init_std: float = 0.01
    warm_epochs: int = 20
    epochs: int = 3
    theta: float = 0.999
    negative_phase: str = "mean-field"  # or "sampled"

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("learning rate must be > 0")
        if self.k < 1:
            raise ValueError("Gibbs steps k must be >= 1")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if not self.hidden_fraction > 0:
            raise ValueError("hidden fraction must be > 0")
        if not self.clip > 0:
            raise ValueError("gradient clip must be > 0")
        if self.epochs < 1 or self.warm_epochs < 0:
            raise ValueError("epochs must be >= 1 and warm_epochs >= 0")
        if self.negative_phase not in ("mean-field", "sampled"):
            raise ValueError(f"unknown negative phase {self.negative_phase!r}")


@dataclass(frozen=True)
class RbmParameters:
    w: np.ndarray
    u: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        V, H = self.w.shape
        if self.u.shape[0] != H or self.a.shape != (V,) or self.b.shape != (H,) \
                or self.c.shape != (self.u.shape[1],):
            raise ValueError("inconsistent RBM parameter shapes")

    @property
    def V(self) -> int:
        return self.w.shape[0]

    @property
    def H(self) -> int:
        return self.w.shape[1]

    @property
    def Z(self) -> int:
        return self.u.shape[1]

    def blocks(self):
        return self.w, self.u, self.a, self.b, self.c

    @classmethod
    def zeros(cls, V: int, H: int, Z: int) -> "RbmParameters":
        return cls(np.zeros((V, H)), np.zeros((H, Z)), np.zeros(V), np.zeros(H),
                   np.zeros(Z))

    def is_finite(self) -> bool:
        return all(np.isfinite(x).all() for x in self.blocks())


@dataclass(frozen=True)
class GradientEstimate:
    d_w: np.ndarray
    d_u: np.ndarray
    d_a: np.ndarray
    d_b: np.ndarray
    d_c: np.ndarray

    def blocks(self):
        return self.d_w, self.d_u, self.d_a, self.d_b, self.d_c


@dataclass
class ClassBalanceState:
    """Effective-number class weights fed by decayed class counts."""

    effective_counts: np.ndarray
    beta: float = 0.99

    def __post_init__(self):
        self.effective_counts = np.asarray(self.effective_counts, dtype=float)

    @classmethod
    def from_stats(cls, stats: ClassStats, beta: float) -> "ClassBalanceState":
        return cls(stats.decayed_counts.copy(), beta)

    def weights(self) -> np.ndarray:
        return np.array([class_balance_weight(m, self)
                         for m in range(len(self.effective_counts))])


def class_balance_weight(m: int, s: ClassBalanceState) -> float:
    """(1 - beta) / (1 - beta**n_m); classes with fewer than one effective sample get 1."""
    n = float(s.effective_counts[m])
    if n < 1.0 or s.beta == 0.0:
        return 1.0
    return (1.0 - s.beta) / (1.0 - s.beta ** n)


def sigmoid(x):
    # split form avoids overflow in exp for large |x|
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _check(name, arr, size):
    if np.shape(arr)[-1] != size:
        raise ValueError(f"{name}: expected trailing dimension {size}, got {np.shape(arr)}")


def energy(v, h, z, p: RbmParameters) -> float:
    v, h, z = (np.asarray(x, dtype=float) for x in (v, h, z))
    _check("v", v, p.V)
    _check("h", h, p.H)
    _check("z", z, p.Z)
    return float(-(v @ p.a) - (h @ p.b) - (z @ p.c) - v @ p.w @ h - h @ p.u @ z)


def hidden_activation(v, z, p: RbmParameters) -> np.ndarray:
    """P(h_j = 1 | v, z); works row-wise on 2-D inputs."""
    _check("v", v, p.V)
    _check("z", z, p.Z)
    return sigmoid(p.b + np.asarray(v) @ p.w + np.asarray(z) @ p.u.T)


def visible_activation(h, p: RbmParameters) -> np.ndarray:
    _check("h", h, p.H)
    return sigmoid(p.a + np.asarray(h) @ p.w.T)


def class_preactivation(h, p: RbmParameters) -> np.ndarray:
    _check("h", h, p.H)
    return p.c + np.asarray(h) @ p.u


def class_activation(h, p: RbmParameters) -> np.ndarray:
    # positive sign on c + h.u is the one consistent with the energy function
    return softmax(class_preactivation(h, p))


def _sample_bernoulli(prob, rng):
    return (rng.random(prob.shape) < prob).astype(float)


def _sample_categorical(prob, rng):
    u = rng.random((prob.shape[0], 1))
    idx = (np.cumsum(prob, axis=1) < u).sum(axis=1)
    idx = np.minimum(idx, prob.shape[1] - 1)
    out = np.zeros_like(prob)
    out[np.arange(prob.shape[0]), idx] = 1.0
    return out


@dataclass
class ChainStats:
    """Per-row sufficient statistics of one CD phase."""

    vh: np.ndarray  # (n, V, H)
    hz: np.ndarray  # (n, H, Z)
    v: np.ndarray
    h: np.ndarray
    z: np.ndarray


def gibbs_chain(v0, z0, k: int, p: RbmParameters, rng,
                mean_field: bool = True) -> tuple[ChainStats, ChainStats]:
    """Run CD-k chains, one per row of ``v0``/``z0``.

    Returns (data statistics, reconstruction statistics). Intermediate states
    are sampled and hidden units enter the statistics as probabilities.

    With ``mean_field`` the last visible/class step uses probabilities
    throughout, so the negative phase lives in the same [0, 1] space as
    real-valued data. Without it the last visible/class states are sampled
    and the estimator is unbiased for the binary-visible likelihood gradient
    once the chain has mixed.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    z0 = np.atleast_2d(np.asarray(z0, dtype=float))
    h0 = hidden_activation(v0, z0, p)
    data = ChainStats(v0[:, :, None] * h0[:, None, :], h0[:, :, None] * z0[:, None, :],
                      v0, h0, z0)
    h = _sample_bernoulli(h0, rng)
    for step in range(k):
        vp = visible_activation(h, p)
        zp = class_activation(h, p)
        if mean_field and step == k - 1:
            v, z = vp, zp
        else:
            v = _sample_bernoulli(vp, rng)
            z = _sample_categorical(zp, rng)
        hp = hidden_activation(v, z, p)
        if step < k - 1:
            h = _sample_bernoulli(hp, rng)
    recon = ChainStats(v[:, :, None] * hp[:, None, :], hp[:, :, None] * z[:, None, :],
                       vp, hp, zp)
    return data, recon


def instance_gradients(X, y, p: RbmParameters, k: int, rng,
                       mean_field: bool = True) -> GradientEstimate:
    """Per-row (recon - data) statistics."""
    X = np.atleast_2d(X)
    y = np.asarray(y, dtype=np.int64)
    Z0 = np.zeros((len(y), p.Z))
    Z0[np.arange(len(y)), y] = 1.0
    data, recon = gibbs_chain(X, Z0, k, p, rng, mean_field)
    return GradientEstimate(recon.vh - data.vh, recon.hz - data.hz, recon.v - data.v,
                            recon.h - data.h, recon.z - data.z)


def batch_gradient(batch, p: RbmParameters, hp: RbmHyperparams,
                   s: ClassBalanceState, rng, X=None) -> GradientEstimate:
    """Class-balanced CD-k gradient of a mini-batch.

    Each instance contributes its (recon - data) statistics scaled by its
    class weight, with the weights rescaled to average one over the batch.
    Only the relative class emphasis survives that rescaling; the raw
    weights are of order (1 - beta) and would otherwise shrink the step.
    ``batch`` is a :class:`MiniBatch` (features assumed normalized) or an
    ``(X, y)`` pair.
    """
    if isinstance(batch, MiniBatch):
        y = batch.y
        X = batch.X if X is None else X
    else:
        X, y = batch
    if len(y) == 0:
        raise ValueError("empty batch")
    y = np.asarray(y, dtype=np.int64)
    wt = s.weights()[y]
    wt = wt / wt.mean()
    g = instance_gradients(X, y, p, hp.k, rng, hp.negative_phase == "mean-field")
    c = hp.clip
    return GradientEstimate(*(np.clip(np.tensordot(wt, b, axes=1), -c, c)
                              for b in g.blocks()))


def apply_update(p: RbmParameters, g: GradientEstimate, eta: float) -> RbmParameters:
    for blk in g.blocks():
        if not np.isfinite(blk).all():
            raise TrainingError("non-finite gradient entry; parameters left untouched")
    return RbmParameters(*(x - eta * dx for x, dx in zip(p.blocks(), g.blocks())))


def n_hidden(V: int, hidden_fraction: float) -> int:
    return max(1, int(round(hidden_fraction * V)))


def init_parameters(schema: StreamSchema, hp: RbmHyperparams, rng) -> RbmParameters:
    V, Z = schema.d, schema.Z
    H = n_hidden(V, hp.hidden_fraction)
    w = rng.normal(0.0, hp.init_std, size=(V, H))
    u = rng.normal(0.0, hp.init_std, size=(H, Z))
    return RbmParameters(w, u, np.zeros(V), np.zeros(H), np.zeros(Z))


# -- snapshots ---------------------------------------------------------------

_MAGIC = b"RBMI"
_HEADER = struct.Struct("<4sIIII")


def to_bytes(p: RbmParameters) -> bytes:
    """Binary snapshot: header (magic, version, V, H, Z) then float64 LE blocks."""
    head = _HEADER.pack(_MAGIC, 1, p.V, p.H, p.Z)
    body = b"".join(np.ascontiguousarray(x, dtype="<f8").tobytes() for x in p.blocks())
    return head + body


def from_bytes(buf: bytes) -> RbmParameters:
    magic, version, V, H, Z = _HEADER.unpack_from(buf)
    if magic != _MAGIC or version != 1:
        raise ValueError("not an RBM snapshot")
    sizes = [(V, H), (H, Z), (V,), (H,), (Z,)]
    off = _HEADER.size
    out = []
    for shape in sizes:
        n = math.prod(shape)
        out.append(np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(shape).copy())
        off += 8 * n
    if off != len(buf):
        raise ValueError("snapshot length mismatch")
    return RbmParameters(*out)


def to_json(p: RbmParameters) -> str:
    return json.dumps({"V": p.V, "H": p.H, "Z": p.Z,
                       "w": p.w.ravel().tolist(), "u": p.u.ravel().tolist(),
                       "a": p.a.tolist(), "b": p.b.tolist(), "c": p.c.tolist()})


def from_json(text: str) -> RbmParameters:
    d = json.loads(text)
    V, H, Z = d["V"], d["H"], d["Z"]
    return RbmParameters(np.array(d["w"], float).reshape(V, H),
                         np.array(d["u"], float).reshape(H, Z),
                         np.array(d["a"], float), np.array(d["b"], float),
                         np.array(d["c"], float))

