import logging
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calfrocket.errors import LeakageError, UnsatisfiableStratificationError, ValidationError
from calfrocket.splitter import (
    Fold,
    Search,
    SplitPlan,
    class_counts,
    held_out_size,
    make_validation_folds,
    plan_splits,
    score_combination,
    select_test_split,
)
from helpers import make_dataset
from oracles import deviation_oracle, split_oracle

LABELS = ("lying", "running", "walking")


def counts_dataset(matrix, labels=LABELS):
    """Dataset whose calf ``calfNN`` holds ``matrix[NN]`` windows per label."""
    layout = {f"calf{i:02d}": {l: int(n) for l, n in zip(labels, row)} for i, row in enumerate(matrix)}
    return make_dataset(layout, length=4)


def random_counts(rng, n_calves, n_classes=3):
    m = rng.integers(0, 12, size=(n_calves, n_classes))
    m[rng.random(m.shape) < 0.2] = 0
    return m


def test_held_out_sizes():
    assert held_out_size(30, 0.3) == 9
    assert held_out_size(21, 0.3) == 6
    assert held_out_size(5, 0.3) == 2  # 1.5 rounds up


def test_uniform_calves():
    ds = counts_dataset(np.full((30, 3), 4))
    test, score = select_test_split(ds)
    assert test == tuple(f"calf{i:02d}" for i in range(9))
    assert score.deviation == pytest.approx(abs(9 / 21 - 0.43), abs=1e-15)
    assert all(r == pytest.approx(9 / 21) for r in score.per_class_ratio.values())


def test_class_only_in_test_is_infinite():
    ds = counts_dataset([[3, 3, 2], [3, 3, 0], [3, 3, 0]])
    s = score_combination(ds, ["calf00"])
    assert s.deviation == math.inf
    assert s.per_class_ratio["walking"] == math.inf


def test_two_calf_boundary():
    ds = make_dataset({"a": {"lying": 4}, "b": {"running": 5}}, length=4)
    s = score_combination(ds, ["a"], target_ratio=1.0)
    assert s.per_class_ratio == {"lying": math.inf, "running": 0.0}
    assert s.deviation == math.inf


def test_score_rejects_bad_sets():
    ds = counts_dataset(np.ones((3, 3)))
    with pytest.raises(ValidationError):
        score_combination(ds, [])
    with pytest.raises(ValidationError):
        score_combination(ds, ds.calves)


def test_six_calves_match_enumeration():
    rng = np.random.default_rng(0)
    m = random_counts(rng, 6) + 1
    ds = counts_dataset(m)
    test, score = select_test_split(ds, 0.3)
    dev, rows = split_oracle(m.astype(float), 2, 0.43)[0]
    assert test == tuple(ds.calves[i] for i in rows)
    assert score.deviation == pytest.approx(dev, abs=1e-12)


def test_seven_calves_three_folds_match_enumeration():
    rng = np.random.default_rng(1)
    m = random_counts(rng, 7) + 1
    ds = counts_dataset(m)
    folds = make_validation_folds(ds.calves, ds, k=3, val_fraction=0.3)
    ranked = split_oracle(m.astype(float), 2, 0.43)[:3]
    assert [f.validation_calves for f in folds] == [tuple(ds.calves[i] for i in rows) for _, rows in ranked]
    for f, (dev, _) in zip(folds, ranked):
        assert f.deviation == pytest.approx(dev, abs=1e-12)
        assert set(f.train_calves) | set(f.validation_calves) == set(ds.calves)


def test_exhausting_the_space_returns_each_combination_once():
    ds = counts_dataset(np.arange(1, 19).reshape(6, 3))
    folds = make_validation_folds(ds.calves, ds, k=math.comb(6, 2), val_fraction=0.3)
    combos = [f.validation_calves for f in folds]
    assert len(set(combos)) == 15
    with pytest.raises(UnsatisfiableStratificationError, match="short by 1"):
        make_validation_folds(ds.calves, ds, k=16, val_fraction=0.3)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 9), st.integers(0, 2**32 - 1), st.sampled_from([0.2, 0.3, 0.5]))
def test_exhaustive_is_optimal(n, seed, frac):
    rng = np.random.default_rng(seed)
    m = random_counts(rng, n)
    m[:, :] += rng.integers(0, 2, size=m.shape)
    ds = counts_dataset(m)
    counts = class_counts(ds, ds.calves)
    k = held_out_size(len(ds.calves), frac)
    if not 1 <= k < len(ds.calves):
        return
    ranked = split_oracle(counts, k, 0.43)
    if not np.isfinite(ranked[0][0]):
        with pytest.raises(UnsatisfiableStratificationError):
            select_test_split(ds, frac)
        return
    test, score = select_test_split(ds, frac)
    assert score.deviation == pytest.approx(ranked[0][0], abs=1e-12)
    # the chosen calves really score that well, and no enumerated alternative beats them
    rows = [ds.calves.index(c) for c in test]
    assert deviation_oracle(counts, rows, 0.43) == pytest.approx(ranked[0][0], abs=1e-12)
    assert all(deviation_oracle(counts, rows, 0.43) <= d + 1e-12 for d, _ in ranked)


def test_sampled_mode_is_seeded():
    rng = np.random.default_rng(2)
    ds = counts_dataset(random_counts(rng, 14) + 1)
    a = select_test_split(ds, search=Search("sampled", 300, seed=4))
    b = select_test_split(ds, search=Search("sampled", 300, seed=4))
    assert a[0] == b[0]
    exact = select_test_split(ds)
    assert exact[1].deviation <= a[1].deviation


def test_budget_fallback_is_loud(caplog):
    ds = counts_dataset(np.ones((10, 3)))
    with caplog.at_level(logging.WARNING, logger="calfrocket"):
        select_test_split(ds, search=Search("exhaustive", 50, seed=0, budget=10))
    assert "exceed the enumeration budget" in caplog.text


def test_search_validation():
    with pytest.raises(ValidationError):
        Search("random")


def test_unit_segments_counts_distinct_segments():
    ds = make_dataset({"a": {"lying": 5, "running": 2}, "b": {"lying": 1}}, length=4)
    np.testing.assert_array_equal(class_counts(ds, ["a", "b"], "segments"), [[1, 1], [1, 0]])
    np.testing.assert_array_equal(class_counts(ds, ["a", "b"], "windows"), [[5, 2], [1, 0]])


def test_plan_thirty_calves_and_manifest(tmp_path):
    rng = np.random.default_rng(3)
    ds = counts_dataset(random_counts(rng, 30, 6) + 2, labels=("drinking_milk", "grooming", "lying", "running", "walking", "other"))
    t0 = time.perf_counter()
    plan = plan_splits(ds, workers=2)
    elapsed = time.perf_counter() - t0
    assert len(plan.test_calves) == 9 and len(plan.train_calves) == 21
    assert len(plan.folds) == 10 and all(len(f.validation_calves) == 6 for f in plan.folds)
    assert elapsed < 120, f"C(30, 9) scan took {elapsed:.1f}s"
    p1 = plan.write(tmp_path / "a.json")
    p2 = SplitPlan.read(p1).write(tmp_path / "b.json")
    assert p1.read_bytes() == p2.read_bytes()
    assert plan_splits(ds, workers=1).to_dict() == plan.to_dict()


def test_plan_check_catches_overlap():
    with pytest.raises(LeakageError):
        SplitPlan(("a",), ("a", "b"), (), 0.0).check()
    with pytest.raises(LeakageError):
        SplitPlan(("c",), ("a", "b"), (Fold(("a",), ("a",), 0.0),), 0.0).check()
    with pytest.raises(LeakageError):
        SplitPlan(("c",), ("a", "b"), (Fold(("a",), ("c",), 0.0),), 0.0).check()


def test_manifest_rejects_other_json(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "other"}')
    with pytest.raises(ValidationError):
        SplitPlan.read(path)
