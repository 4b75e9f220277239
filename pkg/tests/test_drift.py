import math

import numpy as np
import pytest

from rbmim import rbm
from rbmim.drift import (DetectorConfig, RbmImDetector, ReconstructionRecord, SetupError,
                         batch_class_error, class_means, error_from_parts, reconstruct,
                         reconstruction_error)
from rbmim.generators import make_benchmark
from rbmim.rbm import ClassBalanceState, RbmHyperparams, RbmParameters
from rbmim.stream import Instance, MiniBatch, StreamSchema, batches, normalize
from rbmim.trend import SequencingError, TrendTracker


def unit_schema(d, Z):
    return StreamSchema(d, Z, tuple((0.0, 1.0) for _ in range(d)))


def bench_batches(n_batches, seed=0, **kw):
    kw.setdefault("ir_profile", "static")
    gen = make_benchmark("rbf5", length=50 * n_batches, seed=seed, **kw)
    return list(batches(gen, 50))


def test_reconstruct_zero_net():
    xt, yt = reconstruct(np.array([0.3, 0.9]), 1, RbmParameters.zeros(2, 3, 4))
    assert np.all(xt == 0.5) and np.allclose(yt, 0.25)


def test_error_hand_example_and_bound():
    assert error_from_parts([1, 0], [1, 0], [0.5, 0.5], [0.8, 0.2]) == pytest.approx(
        math.sqrt(0.58), abs=1e-12)
    assert error_from_parts([0.2, 0.4], [0, 1], [0.2, 0.4], [0, 1]) == 0.0
    g = np.random.default_rng(0)
    p = RbmParameters(*(g.normal(0, 3, s) for s in ((6, 4), (4, 3), (6,), (4,), (3,))))
    X = g.random((200, 6))
    e = reconstruction_error(X, g.integers(0, 3, 200), p)
    assert np.all(e >= 0) and np.all(e <= math.sqrt(9))


def test_error_is_deterministic():
    p = RbmParameters(*(np.random.default_rng(1).normal(0, 1, s)
                        for s in ((3, 2), (2, 2), (3,), (2,), (2,))))
    x = np.array([0.1, 0.5, 0.9])
    assert reconstruction_error(x, 1, p) == reconstruction_error(x, 1, p)


def test_overfit_single_instance():
    hp = RbmHyperparams()
    x, y = np.array([[0.9, 0.1, 0.8, 0.2]]), np.array([2])
    p = rbm.init_parameters(unit_schema(4, 3), hp, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    s = ClassBalanceState(np.array([0.0, 0.0, 10.0]))
    for _ in range(3000):
        g = rbm.batch_gradient((np.repeat(x, 10, 0), np.repeat(y, 10)), p, hp, s, rng)
        p = rbm.apply_update(p, g, hp.eta)
    assert reconstruction_error(x[0], 2, p) < 0.1 * math.sqrt(4 + 3)


def test_class_means_hand_example():
    mean, counts = class_means(np.array([0.2, 0.6, 0.4]), np.array([0, 1, 0]), 3)
    assert mean[:2] == pytest.approx([0.3, 0.6]) and math.isnan(mean[2])
    assert counts.tolist() == [2, 1, 0]


def test_batch_class_error_identical_and_permuted():
    g = np.random.default_rng(0)
    p = RbmParameters(*(g.normal(0, 1, s) for s in ((3, 2), (2, 3), (3,), (2,), (3,))))
    x = np.array([0.1, 0.7, 0.3])
    same = MiniBatch(0, tuple(Instance(x, 1, i) for i in range(4)))
    rec = batch_class_error(same, p)
    assert rec.per_class_error[1] == pytest.approx(reconstruction_error(x, 1, p))
    assert rec.present().tolist() == [1]
    insts = [Instance(g.random(3), int(g.integers(0, 3)), i) for i in range(12)]
    a = batch_class_error(MiniBatch(0, tuple(insts)), p)
    b = batch_class_error(MiniBatch(0, tuple(reversed(insts))), p)
    assert np.allclose(a.per_class_error, b.per_class_error, equal_nan=True)


def test_warm_start_lowers_error_and_is_deterministic():
    first = bench_batches(1)[0]
    a = RbmImDetector(5, RbmHyperparams(seed=3)).warm_start(first)
    b = RbmImDetector(5, RbmHyperparams(seed=3)).warm_start(first)
    assert all(np.array_equal(x, y) for x, y in zip(a.params.blocks(), b.params.blocks()))
    Xn = normalize(first.X, a.schema)
    init = rbm.init_parameters(a.schema, a.hp, np.random.default_rng(3))
    assert reconstruction_error(Xn, first.y, a.params).mean() < \
        reconstruction_error(Xn, first.y, init).mean()


def test_warm_start_fixes_ranges():
    bs = bench_batches(3)
    det = RbmImDetector(5).warm_start(bs[0])
    ranges = det.schema.feature_ranges
    det.process_batch(bs[1])
    det.process_batch(bs[2])
    assert det.schema.feature_ranges == ranges


def test_setup_errors():
    with pytest.raises(SetupError):
        RbmImDetector(3).process_batch(bench_batches(1)[0])
    with pytest.raises(SetupError):
        RbmImDetector(3).warm_start(None)


def synthetic_detector(Z=2):
    det = RbmImDetector(Z)
    det.tracker = TrendTracker(Z)
    return det


def feed(det, errors, t0=1, presence=None):
    reports = []
    for i, e in enumerate(errors):
        pres = np.full(len(e), 5) if presence is None else presence
        reports.append(det.detect(ReconstructionRecord(t0 + i, np.asarray(e), pres)))
    return reports


def step_series(seed, n=120, at=80):
    g = np.random.default_rng(seed)
    e = 1.0 + 0.05 * g.normal(size=(n, 2))
    e[at:, 0] += 1.0
    return e


def test_error_jump_flags_only_that_class():
    hits = 0
    for seed in range(20):
        calls = []
        det = synthetic_detector()
        det.on_drift = calls.append
        reps = feed(det, step_series(seed))
        flagged = [(r.t, m) for r in reps for m in r.drifted]
        assert all(m == 0 for _, m in flagged)
        hits += any(80 <= t <= 85 for t, _ in flagged)
        assert calls == [m for _, m in flagged]
    assert hits >= 18


def test_class_permutation_permutes_report():
    for seed in range(5):
        e = step_series(seed)
        a = feed(synthetic_detector(), e)
        b = feed(synthetic_detector(), e[:, ::-1])
        for ra, rb in zip(a, b):
            assert ra.decisions == {1 - m: d for m, d in rb.decisions.items()}


def test_absent_class_never_flagged_and_trend_untouched():
    det = synthetic_detector(3)
    e = step_series(0)
    e3 = np.column_stack([e, np.full(len(e), np.nan)])
    reps = feed(det, e3, presence=np.array([5, 5, 0]))
    assert all(2 not in r.decisions for r in reps)
    assert det.tracker[2].n == 0 and det.tracker[2].last_t is None


def test_drift_implies_tested():
    for r in feed(synthetic_detector(), step_series(1)):
        assert set(r.drifted) <= set(r.classes_tested)


def test_sequencing_error_propagates():
    det = synthetic_detector()
    feed(det, [[1.0, 1.0]], t0=5)
    with pytest.raises(SequencingError):
        feed(det, [[1.0, 1.0]], t0=5)


def test_granger_rule_is_looser_than_gated():
    e = step_series(3)
    gated = feed(synthetic_detector(), e)
    det = synthetic_detector()
    det.config = DetectorConfig(rule="granger")
    plain = feed(det, e)
    assert sum(len(r.drifted) for r in plain) >= sum(len(r.drifted) for r in gated)


@pytest.mark.parametrize("kw", [{"lag": 0}, {"alpha": 1.5}, {"gate_alpha": 0}, {"rule": "x"}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        DetectorConfig(**kw)


def test_stationary_stream_false_alarm_rate():
    det = RbmImDetector(5)
    bs = bench_batches(200, seed=1, ir=100, drift="none")
    det.warm_start(bs[0])
    tests = alarms = 0
    for b in bs[1:]:
        rep = det.process_batch(b)
        tests += len(rep.classes_tested)
        alarms += len(rep.drifted)
    assert tests > 0 and alarms / tests <= 0.05
