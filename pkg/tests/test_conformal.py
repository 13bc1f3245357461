import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conformad.conformal import (
    Aggregation,
    CalibratedDetector,
    Strategy,
    StrategyKind,
    aggregate,
    calibrate,
    parse_method,
    predict_p_values,
    smoothed_p_value,
)
from conformad.detectors import Algorithm, DetectorConfig


def brute_force_p(calib, test):
    count = sum(1 for s in calib if s <= test)
    return (count + 1) / (len(calib) + 1)


class _ConstantModel:
    """Duck-typed stand-in whose score is a fixed function of the row sum."""

    def __init__(self, n_features, offset=0.0):
        self.n_features = n_features
        self.offset = offset

    def score(self, points):
        return points.sum(axis=1) + self.offset


class TestSmoothedPValue:
    def test_worked_examples(self):
        calib = [1.0, 2.0, 3.0, 4.0]
        assert smoothed_p_value(calib, 2.5) == 0.6
        assert smoothed_p_value(calib, 0.0) == 0.2
        assert smoothed_p_value(calib, 9.0) == 1.0

    def test_inclusive_tie_rule(self):
        assert smoothed_p_value([1.0, 1.0, 1.0], 1.0) == 1.0

    def test_rejects_empty_calibration(self):
        with pytest.raises(ValueError, match="nonempty"):
            smoothed_p_value([], 0.5)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            smoothed_p_value([1.0, np.nan], 0.5)

    @settings(max_examples=200, deadline=None)
    @given(st.data())
    def test_matches_brute_force_exactly(self, data):
        n = data.draw(st.integers(min_value=1, max_value=200))
        values = data.draw(
            st.lists(
                st.floats(min_value=-50, max_value=50, allow_nan=False),
                min_size=n,
                max_size=n,
            )
        )
        # sometimes test at an existing score to exercise ties
        if data.draw(st.booleans()) and values:
            test = values[data.draw(st.integers(0, len(values) - 1))]
        else:
            test = data.draw(st.floats(min_value=-60, max_value=60, allow_nan=False))
        assert smoothed_p_value(values, test) == brute_force_p(values, test)

    @settings(max_examples=100, deadline=None)
    @given(st.data())
    def test_rank_invariance_under_increasing_transform(self, data):
        n = data.draw(st.integers(min_value=1, max_value=80))
        rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
        calib = rng.standard_normal(n)
        test = float(rng.standard_normal())
        before = smoothed_p_value(calib, test)
        # strictly increasing map: 3x + x^3 then exp-squash
        transform = lambda v: np.tanh(v / 10.0) + v / 5.0
        assert smoothed_p_value(transform(calib), float(transform(np.float64(test)))) == before

    def test_lower_bound(self):
        rng = np.random.default_rng(0)
        calib = rng.standard_normal(99)
        tests = rng.standard_normal(500) - 10.0
        p = np.array([smoothed_p_value(calib, t) for t in tests])
        assert p.min() >= 1.0 / 100.0


class TestAggregate:
    def test_median_odd(self):
        assert aggregate([3.0, 1.0, 2.0], Aggregation.MEDIAN) == 2.0

    def test_median_even_averages_central_pair(self):
        assert aggregate([1.0, 2.0, 3.0, 4.0], Aggregation.MEDIAN) == 2.5

    def test_mean(self):
        assert aggregate([0.0, 1.0], Aggregation.MEAN) == 0.5

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            aggregate([], Aggregation.MEDIAN)


class TestStrategy:
    def test_split_has_no_plus_form(self):
        with pytest.raises(ValueError, match="plus"):
            Strategy(kind=StrategyKind.SPLIT, plus=True)

    def test_parse_method(self):
        assert parse_method("cv+") == (StrategyKind.CV, True)
        assert parse_method("jab") == (StrategyKind.JAB, False)
        with pytest.raises(ValueError, match="unknown method"):
            parse_method("bootstrap")

    def test_labels(self):
        assert Strategy(StrategyKind.SPLIT).label() == "split"
        assert Strategy(StrategyKind.JACKKNIFE, plus=True).label() == "jackknife+"
        assert Strategy(StrategyKind.CV, k=10).label() == "cv(k=10)"


def _gaussian(n, d=2, seed=0):
    return np.random.default_rng(seed).standard_normal((n, d))


class TestCalibrate:
    def test_jackknife_structure(self):
        x = _gaussian(5)
        det = calibrate(
            Strategy(StrategyKind.JACKKNIFE),
            DetectorConfig(algorithm=Algorithm.PCA, pca_components=1),
            x,
            seed=1,
        )
        assert det.n_cal == 5
        assert det.final_model is not None and not det.fold_models

    def test_jackknife_plus_retains_models(self):
        x = _gaussian(5)
        det = calibrate(
            Strategy(StrategyKind.JACKKNIFE, plus=True),
            DetectorConfig(algorithm=Algorithm.PCA, pca_components=1),
            x,
            seed=1,
        )
        assert len(det.fold_models) == 5 and det.final_model is None

    def test_split_calibration_size_rule(self):
        x = _gaussian(200)
        det = calibrate(Strategy(StrategyKind.SPLIT), DetectorConfig(seed=0), x, seed=2)
        assert det.n_cal == 100
        capped = calibrate(
            Strategy(StrategyKind.SPLIT, split_calib_cap=30), DetectorConfig(), x, seed=2
        )
        assert capped.n_cal == 30

    def test_cv_covers_every_row_once(self):
        x = _gaussian(23)
        det = calibrate(
            Strategy(StrategyKind.CV, k=4),
            DetectorConfig(algorithm=Algorithm.PCA, pca_components=2),
            x,
            seed=3,
        )
        assert det.n_cal == 23

    def test_cv_k_equals_n_matches_jackknife_exactly(self):
        x = _gaussian(12, seed=4)
        cfg = DetectorConfig(if_trees=25, seed=0)
        jk = calibrate(Strategy(StrategyKind.JACKKNIFE), cfg, x, seed=9)
        cv = calibrate(Strategy(StrategyKind.CV, k=12), cfg, x, seed=9)
        assert np.array_equal(jk.calib_scores, cv.calib_scores)
        batch = _gaussian(15, seed=5)
        assert np.array_equal(predict_p_values(jk, batch), predict_p_values(cv, batch))

    def test_jab_calibration_size_is_total_oob(self):
        x = _gaussian(100, seed=6)
        det = calibrate(
            Strategy(StrategyKind.JAB, k=20, bootstrap_ratio=0.95),
            DetectorConfig(if_trees=10),
            x,
            seed=7,
        )
        assert det.n_cal > 100  # grows beyond n with enough draws

    def test_jab_mean_cal_size_matches_analytic_expectation(self):
        sizes = [
            calibrate(
                Strategy(StrategyKind.JAB, k=20, bootstrap_ratio=0.95),
                DetectorConfig(algorithm=Algorithm.PCA, pca_components=1),
                _gaussian(100, seed=100 + s),
                seed=s,
            ).n_cal
            for s in range(60)
        ]
        expected = 20 * 100 * (1 - 1 / 100) ** 95  # about 772 in the worked example
        assert abs(np.mean(sizes) - expected) < 15.0
        assert abs(np.mean(sizes) - 772.0) < 15.0

    def test_cv_rejects_k_above_n(self):
        with pytest.raises(ValueError):
            calibrate(Strategy(StrategyKind.CV, k=30), DetectorConfig(), _gaussian(10), seed=0)

    def test_permuting_rows_leaves_pvalues_unchanged_for_loo_pca(self):
        # PCA fits are symmetric in the rows, and jackknife calibration is a
        # per-row multiset, so any row permutation yields the same p-values
        x = _gaussian(14, seed=8)
        cfg = DetectorConfig(algorithm=Algorithm.PCA, pca_components=1)
        base = calibrate(Strategy(StrategyKind.JACKKNIFE), cfg, x, seed=11)
        perm = np.random.default_rng(1).permutation(14)
        shuffled = calibrate(Strategy(StrategyKind.JACKKNIFE), cfg, x[perm], seed=11)
        batch = _gaussian(9, seed=9)
        assert np.allclose(
            predict_p_values(base, batch), predict_p_values(shuffled, batch), atol=1e-12
        )


class TestPredict:
    def test_plus_with_identical_fold_scores_equals_final_model(self):
        calib = np.linspace(-1, 1, 21)
        stub = _ConstantModel(n_features=2)
        plus = CalibratedDetector(
            strategy=Strategy(StrategyKind.CV, plus=True, k=3),
            detector=DetectorConfig(),
            n_features=2,
            calib_scores=calib,
            fold_models=(stub, stub, stub),
        )
        flat = CalibratedDetector(
            strategy=Strategy(StrategyKind.CV, k=3),
            detector=DetectorConfig(),
            n_features=2,
            calib_scores=calib,
            final_model=stub,
        )
        batch = _gaussian(17, seed=10)
        assert np.array_equal(predict_p_values(plus, batch), predict_p_values(flat, batch))

    def test_mean_aggregation(self):
        calib = np.linspace(-1, 1, 11)
        models = (_ConstantModel(1, offset=-0.2), _ConstantModel(1, offset=0.2))
        det = CalibratedDetector(
            strategy=Strategy(StrategyKind.CV, plus=True, k=2, aggregation=Aggregation.MEAN),
            detector=DetectorConfig(),
            n_features=1,
            calib_scores=calib,
            fold_models=models,
        )
        batch = np.array([[0.31]])
        # mean of (0.11, 0.51) = 0.31 -> 7 of 11 calib scores are <= 0.31
        assert predict_p_values(det, batch)[0] == (7 + 1) / 12

    def test_granularity_with_99_calib_scores(self):
        rng = np.random.default_rng(12)
        det = CalibratedDetector(
            strategy=Strategy(StrategyKind.SPLIT),
            detector=DetectorConfig(),
            n_features=3,
            calib_scores=rng.standard_normal(99),
            final_model=_ConstantModel(3),
        )
        p = predict_p_values(det, rng.standard_normal((40, 3)))
        assert np.all(np.isin(np.round(p * 100), np.arange(1, 101)))
        assert np.allclose(p * 100, np.round(p * 100))

    def test_dimension_mismatch(self):
        det = CalibratedDetector(
            strategy=Strategy(StrategyKind.SPLIT),
            detector=DetectorConfig(),
            n_features=3,
            calib_scores=np.arange(5.0),
            final_model=_ConstantModel(3),
        )
        with pytest.raises(ValueError, match="dimension mismatch"):
            predict_p_values(det, np.zeros((2, 2)))

    def test_densest_training_point_gets_high_p(self):
        hits = 0
        for seed in range(100):
            x = np.random.default_rng(seed).standard_normal((500, 2))
            det = calibrate(Strategy(StrategyKind.SPLIT), DetectorConfig(seed=seed), x, seed=seed)
            densest = x[np.argmin((x**2).sum(axis=1))]
            hits += predict_p_values(det, densest[None, :])[0] >= 0.5
        assert hits >= 95

    def test_exactly_one_model_slot(self):
        with pytest.raises(ValueError, match="exactly one"):
            CalibratedDetector(
                strategy=Strategy(StrategyKind.SPLIT),
                detector=DetectorConfig(),
                n_features=1,
                calib_scores=np.arange(3.0),
            )
