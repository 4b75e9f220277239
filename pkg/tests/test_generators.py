import dataclasses
import math

import numpy as np
import pytest
from scipy import stats

from rbmim.generators import (ConfigError, DriftSchedule, ImbalanceSchedule, ScheduleError,
                              StreamGenerator, active_concept, generator_from_config,
                              geometric_priors, inject_local_drift, make_benchmark,
                              make_concept, mixing_coefficient, sample_instance)


def test_mixing_coefficient():
    assert mixing_coefficient(10, 10, 20) == 0.0
    assert mixing_coefficient(20, 10, 20) == 1.0
    assert mixing_coefficient(15, 10, 20) == 0.5
    with pytest.raises(ScheduleError):
        mixing_coefficient(5, 5, 5)


def test_active_concept_kinds():
    rng = np.random.default_rng(0)
    sudden = DriftSchedule("sudden", 100, 100)
    assert active_concept(99, sudden, rng) == 0.0 and active_concept(100, sudden, rng) == 1.0
    assert active_concept(10**6, DriftSchedule("none"), rng) == 0.0
    grad = DriftSchedule("gradual", 100, 200)
    assert all(active_concept(100, grad, rng) == 0.0 for _ in range(100))
    frac = np.mean([active_concept(150, grad, rng) for _ in range(10_000)])
    assert abs(frac - 0.5) <= 0.02
    assert active_concept(125, DriftSchedule("incremental", 100, 200), rng) == 0.25


def test_schedule_validation():
    with pytest.raises(ScheduleError):
        DriftSchedule("sudden", 10, 5)
    with pytest.raises(ScheduleError):
        DriftSchedule("sudden", 1, 1, affected_classes=())
    with pytest.raises(ScheduleError):
        DriftSchedule("wobbly")


def test_blend_endpoints_exact():
    rng = np.random.default_rng(1)
    for fam in ("rbf", "hyperplane"):
        g = make_benchmark(fam + "5", drift="incremental", length=1000, seed=2)
        d0, d1 = g.concepts
        assert d0.blend(d1, 0.0) is d0 and d0.blend(d1, 1.0) is d1
    c = make_concept("rbf", 3, 2, rng)
    assert np.allclose(c.blend(c, 0.3).centroids, c.centroids, rtol=0, atol=1e-15)


def test_priors_sum_to_one_everywhere():
    imb = ImbalanceSchedule.triangle(5, 100.0, 1000, swaps=((300, 0, 4),))
    for j in range(0, 1100, 7):
        assert abs(imb.priors(j).sum() - 1.0) <= 1e-12
        assert np.all(imb.priors(j) >= 0)


def test_role_swap_preserves_priors_multiset():
    base = ImbalanceSchedule.static(geometric_priors(4, 50))
    swapped = dataclasses.replace(base, swaps=((10, 0, 3),))
    assert np.allclose(sorted(base.priors(20)), sorted(swapped.priors(20)))
    assert swapped.priors(20)[0] == pytest.approx(base.priors(20)[3])
    assert np.array_equal(swapped.priors(5), base.priors(5))


def test_geometric_priors_ratio():
    p = geometric_priors(5, 100.0)
    assert p.max() / p.min() == pytest.approx(100.0)
    with pytest.raises(ConfigError, match="class count"):
        geometric_priors(1, 10)


def test_binomial_minority_count():
    imb = ImbalanceSchedule.static([0.99, 0.01])
    gen = StreamGenerator("rbf", 2, 2, 100_000, DriftSchedule(), imb, seed=3)
    ys = np.fromiter((i.label for i in gen), int)
    assert abs((ys == 1).sum() - 1000) <= 3 * math.sqrt(1e5 * 0.01 * 0.99)


def test_static_frequencies_goodness_of_fit():
    pr = geometric_priors(5, 20)
    gen = StreamGenerator("rbf", 3, 5, 100_000, DriftSchedule(), ImbalanceSchedule.static(pr),
                          seed=4)
    counts = np.bincount([i.label for i in gen], minlength=5)
    assert stats.chisquare(counts, pr * counts.sum()).pvalue > 0.01


def test_no_drift_uses_only_old_concept():
    gen = make_benchmark("rbf5", drift="none", length=400, seed=5, ir_profile="static")
    d0 = gen.concepts[0]
    rng = np.random.default_rng([gen.seed, 2])
    ref = [sample_instance(j, (d0, d0), gen.drift, gen.imbalance, rng) for j in range(400)]
    assert all(np.array_equal(a.features, b.features) for a, b in zip(gen, ref))


def test_local_drift_moves_only_the_affected_class():
    gen = StreamGenerator("rbf", 4, 2, 1, DriftSchedule("sudden", 0, 0, (0,)),
                          ImbalanceSchedule.static([0.5, 0.5]), seed=6)
    d0, d1 = gen.concepts
    rng = np.random.default_rng(7)
    post = [sample_instance(10, gen.concepts, gen.drift, gen.imbalance, rng)
            for _ in range(20_000)]
    for m, concept in ((0, d1), (1, d0)):
        X = np.array([i.features for i in post if i.label == m])
        se = X.std(axis=0) / math.sqrt(len(X))
        assert np.all(np.abs(X.mean(axis=0) - concept.class_mean(m)) <= 3.5 * se)
    assert np.linalg.norm(d1.class_mean(0) - d0.class_mean(0)) > 0.3


def test_benchmark_shapes():
    h = make_benchmark("hyperplane5", length=1000)
    assert (h.d, h.Z, h.drift.kind) == (20, 5, "gradual")
    assert h.imbalance.priors(0).max() / h.imbalance.priors(0).min() == pytest.approx(100.0)
    r = make_benchmark("rbf20", length=1000)
    assert (r.d, r.Z, r.drift.kind) == (80, 20, "sudden")
    assert r.imbalance.priors(0).max() / r.imbalance.priors(0).min() == pytest.approx(300.0)
    with pytest.raises(ConfigError):
        make_benchmark("agrawal5")


def test_same_seed_same_stream_and_reiterable():
    a = make_benchmark("hyperplane5", length=300, seed=9)
    b = make_benchmark("hyperplane5", length=300, seed=9)
    fa = np.array([i.features for i in a])
    assert np.array_equal(fa, np.array([i.features for i in b]))
    assert np.array_equal(fa, np.array([i.features for i in a]))


def test_inject_local_drift():
    base = make_benchmark("rbf5", length=1000, ir_profile="static")
    smallest = int(np.argmin(base.imbalance.priors(base.drift.t1)))
    assert inject_local_drift(base, 1).affected() == (smallest,)
    assert sorted(inject_local_drift(base, 5).affected()) == list(range(5))
    with pytest.raises(ConfigError):
        inject_local_drift(base, 0)
    g3 = StreamGenerator("rbf", 2, 3, 100, DriftSchedule("sudden", 50, 50),
                         ImbalanceSchedule.static([0.5, 0.3, 0.2]))
    assert sorted(inject_local_drift(g3, 2).affected()) == [1, 2]


def test_generator_from_config():
    g = generator_from_config({"benchmark": "rbf5", "ir": 50, "ir_profile": "static",
                               "t1": 500, "affected": 2, "length": 1000, "seed": 3,
                               "swaps": [[800, 0, 1]]})
    assert g.length == 1000 and g.drift_points() == [500] and len(g.affected()) == 2
    assert g.imbalance.swaps == ((800, 0, 1),)
    with pytest.raises(ConfigError, match="unknown generator keys"):
        generator_from_config({"benchmark": "rbf5", "colour": 1})
    with pytest.raises(ConfigError, match="class count"):
        generator_from_config({"benchmark": "rbf", "Z": 1})


def test_virtual_drift_keeps_hyperplane_labelling():
    g = make_benchmark("hyperplane5", drift="virtual", length=4000, seed=1, t1=2000)
    d0 = g.concepts[0]
    for inst in g:
        assert d0.region(inst.features[None, :])[0] == inst.label
