import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conformad.core import (
    PlanKind,
    as_feature_matrix,
    child_seed,
    make_plan,
    random_partition,
)


class TestFeatureMatrix:
    def test_accepts_finite_2d(self):
        x = as_feature_matrix([[1.0, 2.0], [3.0, 4.0]])
        assert x.shape == (2, 2) and x.dtype == np.float64

    def test_rejects_nan_with_position(self):
        bad = np.array([[1.0, 2.0], [3.0, np.nan]])
        with pytest.raises(ValueError, match="row 1, column 1"):
            as_feature_matrix(bad)

    def test_rejects_inf(self):
        with pytest.raises(ValueError, match="non-finite"):
            as_feature_matrix([[np.inf, 0.0]])

    def test_rejects_wrong_ndim(self):
        with pytest.raises(ValueError, match="2-d"):
            as_feature_matrix([1.0, 2.0])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            as_feature_matrix(np.empty((0, 3)))


class TestChildSeed:
    def test_deterministic(self):
        assert child_seed(42, 1, 2) == child_seed(42, 1, 2)

    def test_distinct_paths_differ(self):
        seeds = {child_seed(42, i) for i in range(100)}
        assert len(seeds) == 100

    def test_path_is_not_flattened(self):
        assert child_seed(42, 0, 1) != child_seed(42, 1, 0)


class TestRandomPartition:
    def test_half_split(self):
        train, hold = random_partition(10, 0.5, seed=1)
        assert train.size == 5 and hold.size == 5
        assert np.array_equal(np.sort(np.r_[train, hold]), np.arange(10))

    def test_same_seed_same_output(self):
        a = random_partition(20, 0.3, seed=9)
        b = random_partition(20, 0.3, seed=9)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_rounding(self):
        train, hold = random_partition(3, 0.34, seed=0)
        assert {train.size, hold.size} == {1, 2}

    def test_rejects_empty_part(self):
        with pytest.raises(ValueError):
            random_partition(2, 0.1, seed=0)

    @pytest.mark.parametrize("frac", [0.0, 1.0, -0.2, 1.5])
    def test_rejects_bad_fraction(self, frac):
        with pytest.raises(ValueError):
            random_partition(10, frac, seed=0)


class TestKfoldPlan:
    def test_k_equals_n_degenerates_to_singletons(self):
        plan = make_plan(4, PlanKind.KFOLD, k=4, seed=3)
        got = [fold.tolist() for fold in plan.folds]
        assert got == [[0], [1], [2], [3]]

    def test_balanced_sizes(self):
        plan = make_plan(10, PlanKind.KFOLD, k=3, seed=5)
        sizes = sorted(fold.size for fold in plan.folds)
        assert sizes == [3, 3, 4]
        assert np.array_equal(np.sort(np.concatenate(plan.folds)), np.arange(10))

    def test_determinism(self):
        a = make_plan(17, PlanKind.KFOLD, k=5, seed=11)
        b = make_plan(17, PlanKind.KFOLD, k=5, seed=11)
        assert all(np.array_equal(x, y) for x, y in zip(a.folds, b.folds))

    def test_rejects_k_above_n(self):
        with pytest.raises(ValueError):
            make_plan(4, PlanKind.KFOLD, k=5, seed=0)

    def test_rejects_k_below_two(self):
        with pytest.raises(ValueError):
            make_plan(4, PlanKind.KFOLD, k=1, seed=0)

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_partition_property(self, data):
        n = data.draw(st.integers(min_value=2, max_value=60))
        k = data.draw(st.integers(min_value=2, max_value=n))
        seed = data.draw(st.integers(min_value=0, max_value=2**32 - 1))
        plan = make_plan(n, PlanKind.KFOLD, k=k, seed=seed)
        cat = np.concatenate(plan.folds)
        assert np.array_equal(np.sort(cat), np.arange(n))
        assert max(f.size for f in plan.folds) - min(f.size for f in plan.folds) <= 1


class TestLooPlan:
    def test_singletons_in_order(self):
        plan = make_plan(5, PlanKind.LOO, seed=1)
        assert [f.tolist() for f in plan.folds] == [[0], [1], [2], [3], [4]]
        assert plan.n_resamples == 5


class TestBootstrapPlan:
    def test_draw_size(self):
        plan = make_plan(100, PlanKind.BOOTSTRAP, k=5, bootstrap_ratio=0.95, seed=0)
        assert all(d.size == 95 for d in plan.draws)
        assert plan.n_resamples == 5

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_complement_property(self, data):
        n = data.draw(st.integers(min_value=4, max_value=80))
        k = data.draw(st.integers(min_value=1, max_value=6))
        seed = data.draw(st.integers(min_value=0, max_value=2**32 - 1))
        plan = make_plan(n, PlanKind.BOOTSTRAP, k=k, bootstrap_ratio=0.7, seed=seed)
        full = np.arange(n)
        for draw, oob in zip(plan.draws, plan.oob):
            assert oob.size > 0
            assert np.array_equal(oob, np.setdiff1d(full, draw))
            assert np.array_equal(np.union1d(draw, oob), full)
            assert np.intersect1d(draw, oob).size == 0

    def test_rejects_full_ratio(self):
        with pytest.raises(ValueError, match="out-of-bag"):
            make_plan(100, PlanKind.BOOTSTRAP, k=2, bootstrap_ratio=1.0, seed=0)

    def test_rejects_ratio_rounding_to_n(self):
        # ceil(0.95 * 10) == 10 leaves no guaranteed out-of-bag row
        with pytest.raises(ValueError):
            make_plan(10, PlanKind.BOOTSTRAP, k=2, bootstrap_ratio=0.95, seed=0)

    def test_oob_size_matches_analytic_expectation(self):
        # E|oob| = n * (1 - 1/n)^m for draws of size m with replacement
        n, ratio = 100, 0.95
        m = 95
        sizes = []
        for seed in range(1000):
            plan = make_plan(n, PlanKind.BOOTSTRAP, k=1, bootstrap_ratio=ratio, seed=seed)
            sizes.append(plan.oob[0].size)
        assert abs(np.mean(sizes) - 38.6) < 2.0
        assert abs(np.mean(sizes) - n * (1 - 1 / n) ** m) < 1.0


class TestSplitPlan:
    def test_split_plan(self):
        plan = make_plan(10, PlanKind.SPLIT, seed=2, train_frac=0.5)
        assert plan.train_idx.size == 5 and plan.calib_idx.size == 5
        assert np.intersect1d(plan.train_idx, plan.calib_idx).size == 0

    def test_rejects_tiny_n(self):
        with pytest.raises(ValueError):
            make_plan(1, PlanKind.SPLIT, seed=0)
