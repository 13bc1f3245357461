"""Conformal p-value kernel and the resampling calibration strategies.

Seven strategies are supported: split, jackknife, jackknife+, cv, cv+,
jackknife-after-bootstrap (jab) and its retaining variant (jab+). All of
them reduce to the same kernel: a test score is ranked inclusively among
a multiset of calibration conformity scores, and the smoothed p-value
(count + 1) / (n_cal + 1) is returned. The "+" variants retain the fold
models and aggregate their per-point scores instead of fitting one final
model.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import detectors
from .core import PlanKind, as_feature_matrix, child_seed, make_plan, random_partition
from .detectors import DetectorConfig

__all__ = [
    "Aggregation",
    "CalibratedDetector",
    "Strategy",
    "StrategyKind",
    "aggregate",
    "calibrate",
    "parse_method",
    "predict_p_values",
    "smoothed_p_value",
]

# spawn-key namespaces for seed derivation inside calibrate()
_PLAN_KEY = 0
_FOLD_KEY = 1
_FINAL_KEY = 2


class StrategyKind(Enum):
    SPLIT = "split"
    JACKKNIFE = "jackknife"
    CV = "cv"
    JAB = "jab"


class Aggregation(Enum):
    MEDIAN = "median"
    MEAN = "mean"


@dataclass(frozen=True)
class Strategy:
    """Calibration strategy selector.

    ``k`` is the number of folds (cv) or bootstrap draws (jab) and is
    ignored for split/jackknife. ``plus`` retains the fold models for
    inference; split has no plus form. ``split_calib_cap`` bounds the
    calibration part carved out by the split strategy
    (n_cal = min(cap, n // 2)).
    """

    kind: StrategyKind
    plus: bool = False
    k: int = 10
    bootstrap_ratio: float = 0.95
    aggregation: Aggregation = Aggregation.MEDIAN
    split_calib_cap: int = 2000

    def __post_init__(self):
        if self.kind is StrategyKind.SPLIT and self.plus:
            raise ValueError("the split strategy has no plus variant")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 0.0 < self.bootstrap_ratio <= 1.0:
            raise ValueError(f"bootstrap_ratio must lie in (0, 1], got {self.bootstrap_ratio}")
        if self.split_calib_cap < 1:
            raise ValueError(f"split_calib_cap must be >= 1, got {self.split_calib_cap}")

    def label(self) -> str:
        base = self.kind.value + ("+" if self.plus else "")
        if self.kind in (StrategyKind.CV, StrategyKind.JAB):
            return f"{base}(k={self.k})"
        return base


_METHOD_NAMES = {
    "split": (StrategyKind.SPLIT, False),
    "jackknife": (StrategyKind.JACKKNIFE, False),
    "jackknife+": (StrategyKind.JACKKNIFE, True),
    "cv": (StrategyKind.CV, False),
    "cv+": (StrategyKind.CV, True),
    "jab": (StrategyKind.JAB, False),
    "jab+": (StrategyKind.JAB, True),
}


def parse_method(name: str) -> tuple[StrategyKind, bool]:
    """Map a method name like ``"cv+"`` to (kind, plus)."""
    try:
        return _METHOD_NAMES[name]
    except KeyError:
        raise ValueError(
            f"unknown method {name!r}; expected one of {sorted(_METHOD_NAMES)}"
        ) from None


def smoothed_p_value(calib_scores, test_score: float) -> float:
    """Smoothed conformal p-value of one test score.

    Returns (1 + #{s in calib_scores : s <= test_score}) / (n_cal + 1).
    Ties count as inclusive, which is conservative under discrete scores.
    """
    scores = np.asarray(calib_scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("calibration score multiset must be nonempty")
    if not np.all(np.isfinite(scores)) or not np.isfinite(test_score):
        raise ValueError("scores must be finite")
    count = int(np.count_nonzero(scores <= test_score))
    return (count + 1) / (scores.size + 1)


def _p_values_from_sorted(calib_sorted: np.ndarray, test_scores: np.ndarray) -> np.ndarray:
    counts = np.searchsorted(calib_sorted, test_scores, side="right")
    return (counts + 1).astype(np.float64) / (calib_sorted.size + 1)


def aggregate(scores, method: Aggregation) -> float:
    """Reduce fold scores to one scalar (median averages the central pair)."""
    values = np.asarray(scores, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot aggregate an empty score list")
    if method is Aggregation.MEDIAN:
        return float(np.median(values))
    if method is Aggregation.MEAN:
        return float(np.mean(values))
    raise ValueError(f"unknown aggregation: {method!r}")


@dataclass(frozen=True)
class CalibratedDetector:
    """A strategy tag, its calibration score multiset, and the model(s).

    Exactly one of ``final_model`` / ``fold_models`` is populated: plus
    variants retain the fold models, everything else keeps a single model
    for inference.
    """

    strategy: Strategy
    detector: DetectorConfig
    n_features: int
    calib_scores: np.ndarray
    final_model: object | None = None
    fold_models: tuple = ()

    def __post_init__(self):
        scores = np.ascontiguousarray(self.calib_scores, dtype=np.float64)
        if scores.size == 0:
            raise ValueError("calibration score multiset must be nonempty")
        if not np.all(np.isfinite(scores)):
            raise ValueError("calibration scores must be finite")
        scores.setflags(write=False)
        object.__setattr__(self, "calib_scores", scores)
        has_final = self.final_model is not None
        has_folds = len(self.fold_models) > 0
        if has_final == has_folds:
            raise ValueError("exactly one of final_model / fold_models must be present")
        object.__setattr__(self, "_calib_sorted", np.sort(scores))

    @property
    def n_cal(self) -> int:
        return int(self.calib_scores.size)


def _sized_check(kind: StrategyKind, n: int) -> None:
    minimum = {
        StrategyKind.SPLIT: 3,
        StrategyKind.JACKKNIFE: 3,
        StrategyKind.CV: 3,
        StrategyKind.JAB: 3,
    }[kind]
    if n < minimum:
        raise ValueError(f"{kind.value} calibration requires at least {minimum} rows, got {n}")


def calibrate(strategy: Strategy, config: DetectorConfig, train, seed: int = 0) -> CalibratedDetector:
    """Fit and calibrate a detector on inlier training data.

    All stochastic steps derive their seeds from ``seed`` (the seed field
    of ``config`` is overridden per fold), so identical inputs reproduce
    the calibrated detector bit for bit. Fold models are keyed by their
    canonical fold position, which makes cv with k = n coincide exactly
    with the jackknife.
    """
    x = as_feature_matrix(train, name="train")
    n = x.shape[0]
    _sized_check(strategy.kind, n)

    def fold_fit(rows: np.ndarray, key: int):
        cfg = replace(config, seed=child_seed(seed, _FOLD_KEY, key))
        return detectors.fit(cfg, x[rows])

    if strategy.kind is StrategyKind.SPLIT:
        n_cal = min(strategy.split_calib_cap, n // 2)
        if n - n_cal < 2:
            raise ValueError(f"split needs at least 2 proper-training rows, got n={n}")
        train_idx, calib_idx = random_partition(
            n, (n - n_cal) / n, seed=child_seed(seed, _PLAN_KEY)
        )
        model = fold_fit(train_idx, 0)
        calib_scores = detectors.score(model, x[calib_idx])
        return CalibratedDetector(
            strategy=strategy,
            detector=config,
            n_features=x.shape[1],
            calib_scores=calib_scores,
            final_model=model,
        )

    if strategy.kind is StrategyKind.JACKKNIFE:
        folds = [np.array([i]) for i in range(n)]
        complements = [np.flatnonzero(np.arange(n) != i) for i in range(n)]
    elif strategy.kind is StrategyKind.CV:
        if not 2 <= strategy.k <= n:
            raise ValueError(f"cv requires 2 <= k <= n, got k={strategy.k}, n={n}")
        plan = make_plan(n, PlanKind.KFOLD, k=strategy.k, seed=child_seed(seed, _PLAN_KEY))
        in_fold = np.zeros(n, dtype=bool)
        folds, complements = [], []
        for fold in plan.folds:
            in_fold[:] = False
            in_fold[fold] = True
            folds.append(fold)
            complements.append(np.flatnonzero(~in_fold))
    elif strategy.kind is StrategyKind.JAB:
        plan = make_plan(
            n,
            PlanKind.BOOTSTRAP,
            k=strategy.k,
            bootstrap_ratio=strategy.bootstrap_ratio,
            seed=child_seed(seed, _PLAN_KEY),
        )
        folds = list(plan.oob)
        complements = list(plan.draws)
    else:
        raise ValueError(f"unknown strategy kind: {strategy.kind!r}")

    fold_models = []
    if strategy.kind is StrategyKind.JAB:
        parts = []
        for key, (holdout, rows) in enumerate(zip(folds, complements)):
            model = fold_fit(rows, key)
            parts.append(detectors.score(model, x[holdout]))
            if strategy.plus:
                fold_models.append(model)
        calib_scores = np.concatenate(parts)
    else:
        calib_scores = np.empty(n, dtype=np.float64)
        for key, (holdout, rows) in enumerate(zip(folds, complements)):
            model = fold_fit(rows, key)
            calib_scores[holdout] = detectors.score(model, x[holdout])
            if strategy.plus:
                fold_models.append(model)

    if strategy.plus:
        return CalibratedDetector(
            strategy=strategy,
            detector=config,
            n_features=x.shape[1],
            calib_scores=calib_scores,
            fold_models=tuple(fold_models),
        )
    final_cfg = replace(config, seed=child_seed(seed, _FINAL_KEY))
    final_model = detectors.fit(final_cfg, x)
    return CalibratedDetector(
        strategy=strategy,
        detector=config,
        n_features=x.shape[1],
        calib_scores=calib_scores,
        final_model=final_model,
    )


def predict_p_values(det: CalibratedDetector, batch) -> np.ndarray:
    """Simultaneous marginal conformal p-values for a batch of rows.

    Each row is scored by the final model, or by the aggregation of all
    retained fold models for plus variants, and ranked inclusively among
    the calibration scores. Every value lies in (0, 1] and cannot fall
    below 1 / (n_cal + 1).
    """
    x = as_feature_matrix(batch, name="batch")
    if x.shape[1] != det.n_features:
        raise ValueError(
            f"dimension mismatch: detector expects d={det.n_features}, got d={x.shape[1]}"
        )
    if det.final_model is not None:
        test_scores = detectors.score(det.final_model, x)
    else:
        per_model = np.stack([detectors.score(m, x) for m in det.fold_models])
        if det.strategy.aggregation is Aggregation.MEDIAN:
            test_scores = np.median(per_model, axis=0)
        else:
            test_scores = np.mean(per_model, axis=0)
    return _p_values_from_sorted(det._calib_sorted, test_scores)
