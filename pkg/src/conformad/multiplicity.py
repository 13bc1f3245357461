"""Benjamini-Hochberg adjustment and the batch decision metrics.

The step-up procedure controls the batch false discovery rate for
super-uniform p-values under independence or positive regression
dependence, which is the regime conformal p-values live in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BhResult", "benjamini_hochberg", "bh_adjust", "bh_reject", "fdp", "power"]


def _checked_p(pvalues) -> np.ndarray:
    p = np.asarray(pvalues, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"p-values must form a 1-d vector, got shape {p.shape}")
    if p.size and (not np.all(np.isfinite(p)) or p.min() <= 0.0 or p.max() > 1.0):
        raise ValueError("p-values must lie in (0, 1]")
    return p


def bh_adjust(pvalues) -> np.ndarray:
    """Benjamini-Hochberg adjusted p-values, mapped back to input order.

    On the sorted sequence the adjusted value at rank i is
    min(min_{j >= i} m * p_(j) / j, 1). Tied raw p-values receive
    identical adjusted values, and an empty input yields an empty output.
    """
    p = _checked_p(pvalues)
    m = p.size
    if m == 0:
        return p
    order = np.argsort(p, kind="stable")
    # p * (m/j) rather than p*m/j: the factor m/j >= 1 exactly, so the
    # product can never round below p and adjusted >= raw holds bitwise
    scaled = p[order] * (m / np.arange(1, m + 1))
    adjusted_sorted = np.minimum(np.minimum.accumulate(scaled[::-1])[::-1], 1.0)
    out = np.empty(m, dtype=np.float64)
    out[order] = adjusted_sorted
    return out


def bh_reject(pvalues, alpha: float) -> np.ndarray:
    """Step-up rejections at level ``alpha``.

    Rejects exactly the hypotheses whose p-value is at most p_(k*), where
    k* is the largest rank with p_(k) <= k * alpha / m; rejects nothing
    when no such rank exists. Elementwise this agrees with
    ``bh_adjust(pvalues) <= alpha``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    p = _checked_p(pvalues)
    m = p.size
    if m == 0:
        return np.zeros(0, dtype=bool)
    p_sorted = np.sort(p)
    # the comparison p_(k) <= k * alpha / m is evaluated as
    # p_(k) * (m/k) <= alpha, the same floating-point form bh_adjust uses,
    # so thresholding the adjusted values agrees bitwise
    passing = np.flatnonzero(p_sorted * (m / np.arange(1, m + 1)) <= alpha)
    if passing.size == 0:
        return np.zeros(m, dtype=bool)
    return p <= p_sorted[passing[-1]]


@dataclass(frozen=True)
class BhResult:
    """Adjusted p-values and the step-up decisions for one batch.

    ``rejected[i]`` holds exactly when ``adjusted[i] <= alpha``, adjusted
    values never fall below the raw inputs, and in sorted raw order the
    adjusted values are non-decreasing.
    """

    adjusted: np.ndarray
    rejected: np.ndarray
    alpha: float
    m: int


def benjamini_hochberg(pvalues, alpha: float) -> BhResult:
    """Adjust a batch of p-values and decide rejections at level ``alpha``."""
    adjusted = bh_adjust(pvalues)
    rejected = bh_reject(pvalues, alpha)
    return BhResult(adjusted=adjusted, rejected=rejected, alpha=float(alpha), m=adjusted.size)


def fdp(rejected, is_outlier) -> float:
    """False discovery proportion: inliers among rejections / rejections.

    Returns 0.0 when nothing is rejected.
    """
    rej = np.asarray(rejected, dtype=bool)
    out = np.asarray(is_outlier, dtype=bool)
    if rej.shape != out.shape:
        raise ValueError(f"length mismatch: {rej.shape} vs {out.shape}")
    total = int(rej.sum())
    if total == 0:
        return 0.0
    false = int((rej & ~out).sum())
    return false / total


def power(rejected, is_outlier) -> float:
    """Proportion of true outliers that were rejected."""
    rej = np.asarray(rejected, dtype=bool)
    out = np.asarray(is_outlier, dtype=bool)
    if rej.shape != out.shape:
        raise ValueError(f"length mismatch: {rej.shape} vs {out.shape}")
    n_outlier = int(out.sum())
    if n_outlier == 0:
        raise ValueError("power is undefined without any labeled outlier")
    return int((rej & out).sum()) / n_outlier
