import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbmim.stream import (ClassStats, Instance, MiniBatch, SchemaError, StreamSchema, batches,
                          normalize, one_hot, read_csv, update_class_stats,
                          update_class_stats_batch, write_csv)


def schema(*ranges, Z=2):
    return StreamSchema(d=len(ranges), Z=Z, feature_ranges=tuple(ranges))


def test_normalize_midpoint_endpoints_and_clamp():
    assert normalize([5.0], schema((0, 10))).tolist() == [0.5]
    assert normalize([0.0, 10.0], schema((0, 10), (0, 10))).tolist() == [0.0, 1.0]
    assert normalize([-3.0], schema((0, 10))).tolist() == [0.0]
    assert normalize([42.0], schema((0, 10))).tolist() == [1.0]


def test_normalize_length_mismatch():
    with pytest.raises(SchemaError):
        normalize([1.0, 2.0], schema((0, 10)))


def test_constant_feature_maps_to_zero():
    s = StreamSchema.from_data(np.array([[3.0, 1.0], [3.0, 2.0]]), Z=2)
    assert s.widths.tolist() == [1.0, 1.0]
    assert normalize([3.0, 1.5], s).tolist() == [0.0, 0.5]


def test_schema_rejects_single_class_and_bad_ranges():
    with pytest.raises(SchemaError, match="class count"):
        StreamSchema(d=1, Z=1, feature_ranges=((0, 1),))
    with pytest.raises(SchemaError):
        StreamSchema(d=1, Z=2, feature_ranges=((1, 1),))


@given(st.lists(st.floats(0, 10), min_size=3, max_size=3))
def test_normalize_idempotent_in_range(x):
    s = schema((0, 10), (0, 10), (0, 10))
    once = normalize(x, s)
    unit = schema((0, 1), (0, 1), (0, 1))
    assert np.array_equal(normalize(once, unit), once)


def test_one_hot():
    assert one_hot(0, 3).tolist() == [1, 0, 0]
    assert one_hot(2, 3).tolist() == [0, 0, 1]
    assert one_hot(1, 2).tolist() == [0, 1]
    with pytest.raises(ValueError):
        one_hot(3, 3)


def test_class_stats_updates():
    s = update_class_stats(ClassStats(2, theta=1.0), 0)
    assert s.counts.tolist() == [1, 0] and s.decayed_counts.tolist() == [1.0, 0.0]
    s = ClassStats(2, theta=0.5, decayed_counts=np.array([2.0, 0.0]))
    update_class_stats(s, 1)
    assert s.decayed_counts.tolist() == [1.0, 1.0]
    s = ClassStats(2, theta=1.0)
    update_class_stats(update_class_stats(s, 0), 0)
    assert s.counts[0] == 2


@settings(max_examples=50)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=60), st.randoms())
def test_class_stats_permutation_invariant_and_replayable(labels, rnd):
    a = update_class_stats_batch(ClassStats(4, theta=1.0), labels)
    shuffled = list(labels)
    rnd.shuffle(shuffled)
    b = update_class_stats_batch(ClassStats(4, theta=1.0), shuffled)
    assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(a.decayed_counts, b.decayed_counts)
    assert a.counts.tolist() == np.bincount(labels, minlength=4).tolist()
    assert a.counts.sum() == len(labels)


@settings(max_examples=50)
@given(st.lists(st.integers(0, 2), min_size=1, max_size=60), st.floats(0.5, 0.999))
def test_decayed_counts_bounded_by_counts(labels, theta):
    s = update_class_stats_batch(ClassStats(3, theta=theta), labels)
    assert np.all(s.decayed_counts <= s.counts + 1e-12)


def test_batches_indices_and_tail():
    insts = [Instance(np.array([float(i)]), i % 2, i) for i in range(7)]
    out = list(batches(insts, 3))
    assert [b.t for b in out] == [0, 1, 2]
    assert [len(b) for b in out] == [3, 3, 1]
    with pytest.raises(SchemaError):
        MiniBatch(0, ())


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    insts = [Instance(rng.random(3), int(rng.integers(0, 3)), i) for i in range(20)]
    path = tmp_path / "s.csv"
    assert write_csv(path, insts) == 20
    back = list(read_csv(path, Z=3))
    assert [b.label for b in back] == [i.label for i in insts]
    assert all(np.array_equal(a.features, b.features) for a, b in zip(insts, back))


def test_csv_without_header_and_semicolon(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("0.1;0.2;1\n0.3;0.4;0\n")
    rows = list(read_csv(path, Z=2, delimiter=";"))
    assert [r.label for r in rows] == [1, 0]
    assert [r.seq for r in rows] == [0, 1]


def test_csv_errors(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("0.1,0.2,1\n0.3,0\n")
    with pytest.raises(SchemaError, match="columns"):
        list(read_csv(path, Z=2))
    path.write_text("0.1,0.2,5\n")
    with pytest.raises(SchemaError, match="out of range"):
        list(read_csv(path, Z=2))
