"""Shared primitives: input validation, seed derivation, resampling plans.

Score direction convention used across the library: conformity scores are
unitless reals where larger means more conforming (more normal) and smaller
means more anomalous. Every detector adapter maps its native output into
this convention, so the p-value kernel never branches on score direction.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import ceil, floor

import numpy as np

__all__ = [
    "PlanKind",
    "ResamplePlan",
    "as_feature_matrix",
    "child_seed",
    "make_plan",
    "random_partition",
]


class PlanKind(Enum):
    """Resampling scheme used to produce calibration scores."""

    SPLIT = "split"
    LOO = "loo"
    KFOLD = "kfold"
    BOOTSTRAP = "bootstrap"


def child_seed(master: int, *path: int) -> int:
    """Derive a 64-bit child seed from ``master`` and an integer key path.

    Identical (master, path) pairs always yield the same child seed, and
    distinct paths yield statistically independent streams, so every
    stochastic step of a pipeline can own a reproducible seed.
    """
    seq = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(p) for p in path))
    return int(seq.generate_state(1, np.uint64)[0])


def as_feature_matrix(values, name: str = "features") -> np.ndarray:
    """Validate and return an (n, d) float64 matrix of finite values."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {x.shape}")
    n, d = x.shape
    if n < 1 or d < 1:
        raise ValueError(f"{name} must have at least one row and one column, got shape {x.shape}")
    finite = np.isfinite(x)
    if not finite.all():
        r, c = np.argwhere(~finite)[0]
        raise ValueError(f"{name} contains a non-finite value at row {r}, column {c}")
    return x


def _frozen_index(a) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.int64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ResamplePlan:
    """Index bookkeeping for one resampling scheme over ``n`` rows.

    KFOLD and LOO populate ``folds`` (disjoint holdout sets covering
    0..n-1). BOOTSTRAP populates ``draws`` (with-replacement index
    multisets) paired with ``oob`` (their out-of-bag complements). SPLIT
    populates ``train_idx`` and ``calib_idx``.
    """

    kind: PlanKind
    n: int
    folds: tuple = ()
    draws: tuple = ()
    oob: tuple = ()
    train_idx: np.ndarray | None = None
    calib_idx: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("plan requires n >= 1")
        full = np.arange(self.n)
        if self.kind in (PlanKind.KFOLD, PlanKind.LOO):
            if not self.folds:
                raise ValueError("fold plan has no folds")
            if any(f.size == 0 for f in self.folds):
                raise ValueError("folds must be nonempty")
            cat = np.concatenate(self.folds)
            if cat.size != self.n or not np.array_equal(np.sort(cat), full):
                raise ValueError("folds must disjointly cover the row indices")
        elif self.kind is PlanKind.BOOTSTRAP:
            if not self.draws or len(self.draws) != len(self.oob):
                raise ValueError("bootstrap plan needs paired draws and out-of-bag sets")
            for draw, oob in zip(self.draws, self.oob):
                if oob.size == 0:
                    raise ValueError("every out-of-bag set must be nonempty")
                if not np.array_equal(oob, np.setdiff1d(full, draw)):
                    raise ValueError("out-of-bag set must be the exact complement of its draw")
        elif self.kind is PlanKind.SPLIT:
            if self.train_idx is None or self.calib_idx is None:
                raise ValueError("split plan needs train and calibration indices")
            if self.train_idx.size == 0 or self.calib_idx.size == 0:
                raise ValueError("split parts must be nonempty")
            merged = np.concatenate([self.train_idx, self.calib_idx])
            if not np.array_equal(np.sort(merged), full):
                raise ValueError("split parts must disjointly cover the row indices")

    @property
    def n_resamples(self) -> int:
        if self.kind is PlanKind.BOOTSTRAP:
            return len(self.draws)
        if self.kind is PlanKind.SPLIT:
            return 1
        return len(self.folds)


def _partition_sizes(n: int, train_frac: float) -> int:
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must lie in (0, 1), got {train_frac}")
    n_train = int(floor(train_frac * n + 0.5))
    if n_train == 0 or n_train == n:
        raise ValueError(f"train_frac={train_frac} leaves an empty part for n={n}")
    return n_train


def random_partition(n: int, train_frac: float, seed: int = 0):
    """Split 0..n-1 into disjoint (train, holdout) index arrays.

    ``|train| = round(train_frac * n)``; both parts are nonempty and
    returned sorted. The same seed always reproduces the same partition.
    """
    if n < 2:
        raise ValueError("partition requires n >= 2")
    n_train = _partition_sizes(n, train_frac)
    perm = np.random.default_rng(int(seed)).permutation(n)
    return _frozen_index(np.sort(perm[:n_train])), _frozen_index(np.sort(perm[n_train:]))


def make_plan(
    n: int,
    kind: PlanKind,
    k: int | None = None,
    bootstrap_ratio: float = 0.95,
    seed: int = 0,
    train_frac: float = 0.5,
) -> ResamplePlan:
    """Build a deterministic resampling plan over ``n`` rows.

    KFOLD shuffles rows into ``k`` folds whose sizes differ by at most one,
    then orders the folds canonically by smallest member. LOO produces the
    n singleton folds in index order (``k`` is ignored). BOOTSTRAP draws
    ``k`` index multisets of size ``ceil(bootstrap_ratio * n)`` uniformly
    with replacement; the draw size must stay below ``n`` so that every
    out-of-bag complement is guaranteed nonempty. SPLIT delegates to
    :func:`random_partition` with ``train_frac``.
    """
    if n < 2:
        raise ValueError("resampling requires n >= 2")
    rng = np.random.default_rng(int(seed))

    if kind is PlanKind.KFOLD:
        if k is None:
            raise ValueError("k-fold plan requires k")
        if not 2 <= k <= n:
            raise ValueError(f"k-fold requires 2 <= k <= n, got k={k}, n={n}")
        perm = rng.permutation(n)
        parts = [np.sort(p) for p in np.array_split(perm, k)]
        parts.sort(key=lambda p: int(p[0]))
        return ResamplePlan(kind=kind, n=n, folds=tuple(_frozen_index(p) for p in parts))

    if kind is PlanKind.LOO:
        folds = tuple(_frozen_index([i]) for i in range(n))
        return ResamplePlan(kind=kind, n=n, folds=folds)

    if kind is PlanKind.BOOTSTRAP:
        if k is None or k < 1:
            raise ValueError("bootstrap plan requires k >= 1")
        if not 0.0 < bootstrap_ratio <= 1.0:
            raise ValueError(f"bootstrap_ratio must lie in (0, 1], got {bootstrap_ratio}")
        m = ceil(bootstrap_ratio * n)
        if m >= n:
            raise ValueError(
                f"bootstrap draw size {m} >= n={n} cannot guarantee a nonempty "
                "out-of-bag set; reduce bootstrap_ratio"
            )
        full = np.arange(n)
        draws, oobs = [], []
        for _ in range(k):
            draw = np.sort(rng.integers(0, n, size=m))
            draws.append(_frozen_index(draw))
            oobs.append(_frozen_index(np.setdiff1d(full, draw)))
        return ResamplePlan(kind=kind, n=n, draws=tuple(draws), oob=tuple(oobs))

    if kind is PlanKind.SPLIT:
        n_train = _partition_sizes(n, train_frac)
        perm = rng.permutation(n)
        return ResamplePlan(
            kind=kind,
            n=n,
            train_idx=_frozen_index(np.sort(perm[:n_train])),
            calib_idx=_frozen_index(np.sort(perm[n_train:])),
        )

    raise ValueError(f"unknown plan kind: {kind!r}")
