"""Evaluation harness: replicated FDR/power experiments over labeled data.

The protocol draws J inlier-only training pools; each pool is calibrated
once and evaluated on L test sets (90/10 inlier/outlier mix by default)
via BH rejections at the nominal level. Per-pool means of the false
discovery proportion and of the power are aggregated into mean, 90th
percentile (nearest rank) and standard deviation, and the mean FDR over
pools is the marginal FDR estimate.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from math import ceil, floor

import numpy as np
import pandas as pd

from .conformal import Strategy, StrategyKind, calibrate, predict_p_values
from .core import as_feature_matrix, child_seed
from .detectors import DetectorConfig
from .multiplicity import bh_reject, fdp, power

__all__ = [
    "LOO_GATE_MAX_ROWS",
    "ExperimentConfig",
    "ExperimentReport",
    "LabeledDataset",
    "check_loo_gate",
    "expected_oob_per_draw",
    "format_reports",
    "load_csv",
    "make_synthetic",
    "nearest_rank_p90",
    "run_calibration_sweep",
    "run_experiment",
]

# leave-one-out refits become impractical beyond this pool size
LOO_GATE_MAX_ROWS = 1000


@dataclass(frozen=True)
class LabeledDataset:
    """An (n, d) feature matrix with optional 0/1 outlier labels."""

    features: np.ndarray
    is_outlier: np.ndarray | None = None
    name: str = "unnamed"

    def __post_init__(self):
        x = as_feature_matrix(self.features)
        x.setflags(write=False)
        object.__setattr__(self, "features", x)
        if self.is_outlier is not None:
            labels = np.ascontiguousarray(self.is_outlier, dtype=bool)
            if labels.shape != (x.shape[0],):
                raise ValueError(
                    f"labels must have one entry per row: {labels.shape} vs n={x.shape[0]}"
                )
            if labels.all():
                raise ValueError("dataset must contain at least one inlier")
            labels.setflags(write=False)
            object.__setattr__(self, "is_outlier", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ExperimentConfig:
    """Protocol parameters: J training pools, L test sets each, level alpha."""

    detector: DetectorConfig
    strategy: Strategy
    j: int = 20
    l: int = 20
    alpha: float = 0.2
    n_train_frac: float = 0.5
    cal_cap: int = 2000
    test_cap: int = 1000
    outlier_frac_test: float = 0.10
    seed: int = 0
    force_loo: bool = False

    def __post_init__(self):
        if self.j < 1 or self.l < 1:
            raise ValueError(f"j and l must be >= 1, got j={self.j}, l={self.l}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.n_train_frac < 1.0:
            raise ValueError(f"n_train_frac must lie in (0, 1), got {self.n_train_frac}")
        if not 0.0 < self.outlier_frac_test < 1.0:
            raise ValueError(
                f"outlier_frac_test must lie in (0, 1), got {self.outlier_frac_test}"
            )
        if self.cal_cap < 1 or self.test_cap < 1:
            raise ValueError("cal_cap and test_cap must be >= 1")


def check_loo_gate(strategy: Strategy, n_rows: int, force: bool = False) -> None:
    """Refuse leave-one-out calibration on large pools unless forced."""
    if strategy.kind is StrategyKind.JACKKNIFE and n_rows > LOO_GATE_MAX_ROWS and not force:
        raise ValueError(
            f"low-data gate: leave-one-out calibration refused for {n_rows} rows "
            f"(limit {LOO_GATE_MAX_ROWS}); pass force_loo/--force-loo to override"
        )


def nearest_rank_p90(values) -> float:
    """90th percentile by the nearest-rank method (constant in, constant out)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("cannot take a percentile of an empty sequence")
    rank = ceil(0.9 * v.size)
    return float(v[rank - 1])


@dataclass(frozen=True)
class ExperimentReport:
    """Per-pool cFDR/cPower estimates plus their aggregates."""

    dataset: str
    detector: dict
    strategy: dict
    protocol: dict
    strategy_label: str
    alpha: float
    j: int
    l: int
    n_pool: int
    test_size: int
    n_cal: tuple
    cfdr: tuple
    cpower: tuple
    fdr_mean: float
    fdr_p90: float
    fdr_std: float
    power_mean: float
    power_p90: float
    power_std: float
    mfdr: float
    extras: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    def to_dict(self) -> dict:
        # runtime is intentionally excluded: serialized reports must be
        # byte-identical across reruns with the same seed
        out = {
            "dataset": self.dataset,
            "strategy_label": self.strategy_label,
            "alpha": self.alpha,
            "j": self.j,
            "l": self.l,
            "n_pool": self.n_pool,
            "test_size": self.test_size,
            "detector": self.detector,
            "strategy": self.strategy,
            "protocol": self.protocol,
            "n_cal": list(self.n_cal),
            "cfdr": [float(v) for v in self.cfdr],
            "cpower": [float(v) for v in self.cpower],
            "fdr": {"mean": self.fdr_mean, "p90": self.fdr_p90, "std": self.fdr_std},
            "power": {"mean": self.power_mean, "p90": self.power_p90, "std": self.power_std},
            "mfdr": self.mfdr,
        }
        if self.extras:
            out["extras"] = self.extras
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _aggregates(values: np.ndarray) -> tuple[float, float, float]:
    mean = float(np.mean(values))
    p90 = nearest_rank_p90(values)
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return mean, p90, std


def _config_echo(config: ExperimentConfig) -> tuple[dict, dict, dict]:
    det = asdict(config.detector)
    det["algorithm"] = config.detector.algorithm.value
    strat = asdict(config.strategy)
    strat["kind"] = config.strategy.kind.value
    strat["aggregation"] = config.strategy.aggregation.value
    protocol = {
        "n_train_frac": config.n_train_frac,
        "cal_cap": config.cal_cap,
        "test_cap": config.test_cap,
        "outlier_frac_test": config.outlier_frac_test,
        "seed": config.seed,
        "force_loo": config.force_loo,
    }
    return det, strat, protocol


def run_experiment(config: ExperimentConfig, data: LabeledDataset) -> ExperimentReport:
    """Run the replicated protocol and report cFDR/cPower aggregates.

    Per replicate j: an inlier-only pool of round(n_train_frac * n_inlier)
    rows is drawn, the strategy is calibrated on it, and L test sets of
    size min(test_cap, pool // 3) with the configured outlier fraction are
    scored; BH rejections at alpha yield one FDP and one power value per
    test set. Test inliers are drawn from inliers outside the pool;
    outliers are reused with replacement only when the outlier pool is too
    small for the requested composition.
    """
    started = time.perf_counter()
    if data.is_outlier is None:
        raise ValueError("run_experiment requires a labeled dataset")
    inlier_rows = np.flatnonzero(~data.is_outlier)
    outlier_rows = np.flatnonzero(data.is_outlier)

    n_pool = int(floor(config.n_train_frac * inlier_rows.size + 0.5))
    if n_pool < 4:
        raise ValueError(f"training pool of {n_pool} rows is too small")
    check_loo_gate(config.strategy, n_pool, config.force_loo)

    test_size = min(config.test_cap, n_pool // 3)
    if test_size < 2:
        raise ValueError(f"test size {test_size} is too small; enlarge the dataset")
    n_out_test = int(floor(config.outlier_frac_test * test_size + 0.5))
    n_in_test = test_size - n_out_test
    if n_in_test < 1 or n_out_test < 1:
        raise ValueError(
            f"test composition {n_in_test}/{n_out_test} needs at least one row of each kind"
        )
    if inlier_rows.size - n_pool < n_in_test:
        raise ValueError(
            f"insufficient inliers: pool of {n_pool} leaves {inlier_rows.size - n_pool} "
            f"rows but each test set needs {n_in_test}"
        )
    if outlier_rows.size == 0:
        raise ValueError("insufficient outliers: the labeled dataset has none")
    outliers_with_replacement = outlier_rows.size < n_out_test

    strategy = replace(config.strategy, split_calib_cap=config.cal_cap)
    feats = data.features
    labels = np.r_[np.zeros(n_in_test, dtype=bool), np.ones(n_out_test, dtype=bool)]
    cfdr = np.empty(config.j)
    cpower = np.empty(config.j)
    n_cal: list[int] = []

    for rep in range(config.j):
        pool_rng = np.random.default_rng(child_seed(config.seed, 0, rep))
        pool = np.sort(pool_rng.choice(inlier_rows, size=n_pool, replace=False))
        det = calibrate(strategy, config.detector, feats[pool], seed=child_seed(config.seed, 1, rep))
        n_cal.append(det.n_cal)

        remaining = np.setdiff1d(inlier_rows, pool)
        batches = []
        for tst in range(config.l):
            test_rng = np.random.default_rng(child_seed(config.seed, 2, rep, tst))
            rows_in = test_rng.choice(remaining, size=n_in_test, replace=False)
            rows_out = test_rng.choice(
                outlier_rows, size=n_out_test, replace=outliers_with_replacement
            )
            batches.append(np.r_[rows_in, rows_out])
        # the L test sets overlap heavily; score each distinct row once
        rows_all = np.concatenate(batches)
        uniq_rows, inverse = np.unique(rows_all, return_inverse=True)
        p_uniq = predict_p_values(det, feats[uniq_rows])
        pvals = p_uniq[inverse].reshape(config.l, test_size)

        fdps = np.empty(config.l)
        powers = np.empty(config.l)
        for tst in range(config.l):
            rejected = bh_reject(pvals[tst], config.alpha)
            fdps[tst] = fdp(rejected, labels)
            powers[tst] = power(rejected, labels)
        cfdr[rep] = fdps.mean()
        cpower[rep] = powers.mean()

    fdr_mean, fdr_p90, fdr_std = _aggregates(cfdr)
    power_mean, power_p90, power_std = _aggregates(cpower)
    det_echo, strat_echo, protocol_echo = _config_echo(config)
    return ExperimentReport(
        dataset=data.name,
        detector=det_echo,
        strategy=strat_echo,
        protocol=protocol_echo,
        strategy_label=config.strategy.label(),
        alpha=config.alpha,
        j=config.j,
        l=config.l,
        n_pool=n_pool,
        test_size=test_size,
        n_cal=tuple(n_cal),
        cfdr=tuple(float(v) for v in cfdr),
        cpower=tuple(float(v) for v in cpower),
        fdr_mean=fdr_mean,
        fdr_p90=fdr_p90,
        fdr_std=fdr_std,
        power_mean=power_mean,
        power_p90=power_p90,
        power_std=power_std,
        mfdr=fdr_mean,
        runtime_s=time.perf_counter() - started,
    )


def expected_oob_per_draw(n_pool: int, bootstrap_ratio: float) -> float:
    """Expected out-of-bag rows of one bootstrap draw over an n_pool-row pool."""
    m = ceil(bootstrap_ratio * n_pool)
    return n_pool * (1.0 - 1.0 / n_pool) ** m


def run_calibration_sweep(
    config: ExperimentConfig, data: LabeledDataset, target_cal_sizes
) -> list[ExperimentReport]:
    """Rerun the protocol at several calibration-set sizes (jab only).

    For each target, the bootstrap draw count k is chosen so that the
    expected total out-of-bag score count matches the target at the
    configured resampling ratio; targets below one draw's expected yield
    are unreachable and rejected.
    """
    if config.strategy.kind is not StrategyKind.JAB:
        raise ValueError("the calibration-size sweep requires a jab or jab+ strategy")
    targets = [int(t) for t in target_cal_sizes]
    if not targets:
        return []
    if data.is_outlier is None:
        raise ValueError("run_calibration_sweep requires a labeled dataset")
    n_inliers = int((~data.is_outlier).sum())
    n_pool = int(floor(config.n_train_frac * n_inliers + 0.5))
    per_draw = expected_oob_per_draw(n_pool, config.strategy.bootstrap_ratio)

    reports = []
    for target in targets:
        if target < per_draw:
            raise ValueError(
                f"target calibration size {target} is below one draw's expected "
                f"out-of-bag yield {per_draw:.1f}; unreachable at ratio "
                f"{config.strategy.bootstrap_ratio}"
            )
        k = max(1, int(floor(target / per_draw + 0.5)))
        swept = replace(config, strategy=replace(config.strategy, k=k))
        report = run_experiment(swept, data)
        extras = {
            "target_cal_size": target,
            "bootstrap_draws": k,
            "expected_cal_size": k * per_draw,
            "realized_mean_cal_size": float(np.mean(report.n_cal)),
        }
        reports.append(replace(report, extras=extras))
    return reports


def make_synthetic(
    n_inlier: int, n_outlier: int, d: int, shift: float, seed: int = 0
) -> LabeledDataset:
    """Gaussian inliers plus mean-shifted Gaussian outliers.

    Inliers follow a standard d-dimensional normal; outliers share its
    covariance but are displaced by ``shift`` along the normalized
    all-ones direction. Rows are inliers first, then outliers.
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if shift < 0:
        raise ValueError(f"shift must be >= 0, got {shift}")
    if n_inlier < 1:
        raise ValueError(f"n_inlier must be >= 1, got {n_inlier}")
    if n_outlier < 0:
        raise ValueError(f"n_outlier must be >= 0, got {n_outlier}")
    rng = np.random.default_rng(int(seed))
    inliers = rng.standard_normal((n_inlier, d))
    outliers = rng.standard_normal((n_outlier, d)) + shift / np.sqrt(d)
    features = np.vstack([inliers, outliers])
    labels = np.r_[np.zeros(n_inlier, dtype=bool), np.ones(n_outlier, dtype=bool)]
    return LabeledDataset(
        features=features,
        is_outlier=labels,
        name=f"synthetic(n_in={n_inlier},n_out={n_outlier},d={d},shift={shift:g})",
    )


def load_csv(path: str, label_column: str | None = None) -> LabeledDataset:
    """Load a headered, comma-separated numeric table.

    ``label_column`` (0/1 values, 1 = outlier) is optional; without it the
    dataset carries no labels and evaluation operations are unavailable.
    Non-finite cells are rejected with an error naming the position.
    """
    frame = pd.read_csv(path)
    if frame.shape[0] < 1 or frame.shape[1] < 1:
        raise ValueError(f"{path}: empty table")
    labels = None
    if label_column is not None:
        if label_column not in frame.columns:
            raise ValueError(f"{path}: missing label column {label_column!r}")
        raw = pd.to_numeric(frame[label_column], errors="coerce").to_numpy()
        if not np.all(np.isfinite(raw)) or not np.all(np.isin(raw, (0.0, 1.0))):
            raise ValueError(f"{path}: label column {label_column!r} must contain only 0/1")
        labels = raw.astype(bool)
        frame = frame.drop(columns=[label_column])
    if frame.shape[1] < 1:
        raise ValueError(f"{path}: no feature columns besides the label")
    values = np.empty(frame.shape, dtype=np.float64)
    for col_pos, col in enumerate(frame.columns):
        converted = pd.to_numeric(frame[col], errors="coerce").to_numpy(dtype=np.float64)
        bad = np.flatnonzero(~np.isfinite(converted))
        if bad.size:
            raise ValueError(
                f"{path}: non-finite or non-numeric value at row {int(bad[0])}, "
                f"column {col!r}"
            )
        values[:, col_pos] = converted
    return LabeledDataset(features=values, is_outlier=labels, name=str(path))


def format_reports(reports) -> str:
    """Aligned text table of FDR and power aggregates, one row per report."""
    reports = list(reports)
    if not reports:
        return "(no reports)\n"
    header = (
        f"{'method':<18} {'n_cal':>6} "
        f"{'FDR mean':>9} {'FDR p90':>9} {'FDR sd':>9} "
        f"{'pow mean':>9} {'pow p90':>9} {'pow sd':>9}"
    )
    lines = [
        f"dataset: {reports[0].dataset}   detector: {reports[0].detector['algorithm']}   "
        f"alpha={reports[0].alpha:g}   J={reports[0].j} L={reports[0].l}",
        header,
        "-" * len(header),
    ]
    for rep in reports:
        label = rep.strategy_label
        if "target_cal_size" in rep.extras:
            label = f"{rep.strategy_label}@{rep.extras['target_cal_size']}"
        mean_cal = int(round(float(np.mean(rep.n_cal))))
        lines.append(
            f"{label:<18} {mean_cal:>6d} "
            f"{rep.fdr_mean:>9.3f} {rep.fdr_p90:>9.3f} {rep.fdr_std:>9.3f} "
            f"{rep.power_mean:>9.3f} {rep.power_p90:>9.3f} {rep.power_std:>9.3f}"
        )
    return "\n".join(lines) + "\n"
