"""Built-in one-class scorers behind a single fit/score interface.

Three detectors are provided: Isolation Forest, Local Outlier Factor and
PCA reconstruction error. All of them emit conformity scores in the
library convention (larger = more conforming):

* Isolation Forest: mean isolation path length over the trees, used
  directly (deep paths mean hard-to-isolate, i.e. normal, points).
* LOF: the negated local outlier factor.
* PCA: the negated squared reconstruction error onto the retained axes.

Models are immutable after fitting and scoring is a pure function of
(model, points), so models can be shared freely between workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import as_feature_matrix

__all__ = [
    "Algorithm",
    "DetectorConfig",
    "IsolationForestModel",
    "LofModel",
    "PcaModel",
    "average_path_length",
    "fit",
    "score",
]

_EULER_GAMMA = 0.5772156649015329


class Algorithm(Enum):
    ISOLATION_FOREST = "iforest"
    LOF = "lof"
    PCA = "pca"


@dataclass(frozen=True)
class DetectorConfig:
    """Hyperparameters for one detector.

    Only the fields of the selected ``algorithm`` are validated against the
    training data; the remaining fields are ignored. ``if_subsample`` is
    capped at the training size at fit time.
    """

    algorithm: Algorithm = Algorithm.ISOLATION_FOREST
    if_trees: int = 100
    if_subsample: int = 256
    lof_neighbors: int = 20
    pca_components: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.if_trees < 1:
            raise ValueError(f"if_trees must be >= 1, got {self.if_trees}")
        if self.if_subsample < 1:
            raise ValueError(f"if_subsample must be >= 1, got {self.if_subsample}")
        if self.lof_neighbors < 1:
            raise ValueError(f"lof_neighbors must be >= 1, got {self.lof_neighbors}")
        if self.pca_components < 1:
            raise ValueError(f"pca_components must be >= 1, got {self.pca_components}")


def average_path_length(sizes) -> np.ndarray:
    """Expected unsuccessful-search path length c(m) in a random binary tree.

    c(0) = c(1) = 0 and c(2) = 1; for larger m the harmonic-number
    approximation 2(ln(m-1) + gamma) - 2(m-1)/m is used.
    """
    m = np.asarray(sizes, dtype=np.float64)
    out = np.zeros_like(m)
    out[m == 2.0] = 1.0
    big = m > 2.0
    mb = m[big]
    out[big] = 2.0 * (np.log(mb - 1.0) + _EULER_GAMMA) - 2.0 * (mb - 1.0) / mb
    return out


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Isolation Forest
# ---------------------------------------------------------------------------
#
# Trees are stored in an implicit heap layout (root = 1, children 2i and
# 2i + 1) as flat arrays, one row per tree. Building proceeds one depth
# level at a time across all trees simultaneously: per level, the points of
# every (tree, node) group are reduced to min/max on the node's random
# feature, a uniform threshold is drawn, and points are routed to child
# nodes in a handful of vectorized operations. Scoring walks all trees for
# all query points level-synchronously the same way. This keeps both fit
# and score free of per-node Python overhead, which matters because the
# leave-one-out strategies fit thousands of forests.


@dataclass(frozen=True)
class IsolationForestModel:
    split_feature: np.ndarray  # (trees, nodes) int32, -1 marks leaf/unused
    split_value: np.ndarray  # (trees, nodes) float32
    leaf_extra: np.ndarray  # (trees, nodes) float32, c(leaf size) at leaves
    depth_cap: int
    n_features: int

    algorithm = Algorithm.ISOLATION_FOREST

    def score(self, points: np.ndarray) -> np.ndarray:
        q = points.shape[0]
        n_trees, n_nodes = self.split_feature.shape
        sf = self.split_feature.reshape(-1)
        sv = self.split_value.reshape(-1)
        le = self.leaf_extra.reshape(-1)
        flat_points = np.ascontiguousarray(points).reshape(-1)
        # one state slot per (point, tree) pair; finished pairs are compacted away
        tree_off = np.tile(np.arange(n_trees, dtype=np.int64) * n_nodes, q)
        row_off = np.repeat(np.arange(q, dtype=np.int64) * self.n_features, n_trees)
        node = np.ones(q * n_trees, dtype=np.int64)
        paths = np.zeros(q * n_trees, dtype=np.float64)
        alive = np.arange(q * n_trees)
        for level in range(self.depth_cap + 1):
            slot = tree_off + node
            feat = sf.take(slot)
            at_leaf = feat < 0
            if at_leaf.any():
                paths[alive[at_leaf]] = level + le.take(slot[at_leaf])
                going = ~at_leaf
                alive = alive[going]
                if alive.size == 0:
                    break
                node = node[going]
                tree_off = tree_off[going]
                row_off = row_off[going]
                slot = slot[going]
                feat = feat[going]
            values = flat_points.take(row_off + feat)
            node = node * 2 + (values >= sv.take(slot))
        return paths.reshape(q, n_trees).mean(axis=1)

    def to_state(self) -> dict:
        return {
            "split_feature": self.split_feature,
            "split_value": self.split_value,
            "leaf_extra": self.leaf_extra,
            "meta": np.array([self.depth_cap, self.n_features], dtype=np.int64),
        }

    @classmethod
    def from_state(cls, state: dict) -> "IsolationForestModel":
        depth_cap, n_features = (int(v) for v in state["meta"])
        return cls(
            split_feature=_readonly(state["split_feature"]),
            split_value=_readonly(state["split_value"]),
            leaf_extra=_readonly(state["leaf_extra"]),
            depth_cap=depth_cap,
            n_features=n_features,
        )


def _fit_isolation_forest(x: np.ndarray, config: DetectorConfig) -> IsolationForestModel:
    n, d = x.shape
    n_trees = config.if_trees
    m = min(config.if_subsample, n)
    depth_cap = max(1, int(np.ceil(np.log2(max(m, 2)))))
    n_nodes = 1 << (depth_cap + 1)
    rng = np.random.default_rng(int(config.seed))

    split_feature = np.full((n_trees, n_nodes), -1, dtype=np.int32)
    split_value = np.zeros((n_trees, n_nodes), dtype=np.float32)
    leaf_extra = np.zeros((n_trees, n_nodes), dtype=np.float32)
    sf_flat = split_feature.reshape(-1)
    sv_flat = split_value.reshape(-1)
    le_flat = leaf_extra.reshape(-1)

    if m < n:
        # per-tree subsample without replacement
        rows2d = np.argsort(rng.random((n_trees, n)), axis=1)[:, :m]
    else:
        rows2d = np.broadcast_to(np.arange(n), (n_trees, m))
    tree = np.repeat(np.arange(n_trees, dtype=np.int32), m)
    row = np.ascontiguousarray(rows2d, dtype=np.int64).reshape(-1)
    node = np.ones(n_trees * m, dtype=np.int32)
    active = np.ones(n_trees * m, dtype=bool)

    for level in range(depth_cap + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        width = 1 << level
        gkey = tree[idx] * width + (node[idx] - width)
        order = np.argsort(gkey, kind="stable")
        gsorted = gkey[order]
        boundary = np.empty(gsorted.size, dtype=bool)
        boundary[0] = True
        np.not_equal(gsorted[1:], gsorted[:-1], out=boundary[1:])
        starts = np.flatnonzero(boundary)
        uniq = gsorted[starts]
        counts = np.diff(np.append(starts, gsorted.size))
        heap = (uniq.astype(np.int64) // width) * n_nodes + width + (uniq % width)

        if level == depth_cap:
            le_flat[heap] = average_path_length(counts)
            active[idx] = False
            break

        feats_lvl = rng.integers(0, d, size=n_trees * width)
        units_lvl = rng.random(n_trees * width)
        feat_slot = feats_lvl[gkey]
        values = x[row[idx], feat_slot]
        vsorted = values[order]
        gmin = np.minimum.reduceat(vsorted, starts)
        gmax = np.maximum.reduceat(vsorted, starts)
        splittable = (counts > 1) & (gmax > gmin)
        # thresholds are stored (and compared) as float32 so that training
        # routing matches scoring routing exactly
        thresh = (gmin + units_lvl[uniq] * (gmax - gmin)).astype(np.float32)

        sf_flat[heap[splittable]] = feats_lvl[uniq[splittable]]
        sv_flat[heap[splittable]] = thresh[splittable]
        leafy = ~splittable
        le_flat[heap[leafy]] = average_path_length(counts[leafy])

        split_lut = np.zeros(n_trees * width, dtype=bool)
        split_lut[uniq] = splittable
        thresh_lut = np.zeros(n_trees * width, dtype=np.float32)
        thresh_lut[uniq] = thresh
        goes_on = split_lut[gkey]
        moving = idx[goes_on]
        right = values[goes_on] >= thresh_lut[gkey[goes_on]]
        node[moving] = node[moving] * 2 + right
        active[idx[~goes_on]] = False

    return IsolationForestModel(
        split_feature=_readonly(split_feature),
        split_value=_readonly(split_value),
        leaf_extra=_readonly(leaf_extra),
        depth_cap=depth_cap,
        n_features=d,
    )


# ---------------------------------------------------------------------------
# Local Outlier Factor
# ---------------------------------------------------------------------------


def _pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return np.sqrt(sq)


@dataclass(frozen=True)
class LofModel:
    """Novelty-mode LOF: queries are scored against the training index.

    ``reach_floor`` is the machine-epsilon-scaled data diameter used to
    floor reachability distances, which keeps local reachability densities
    finite when the data contains duplicated rows.
    """

    train: np.ndarray  # (n, d)
    k_distance: np.ndarray  # (n,) distance to the k-th nearest training row
    local_reach_density: np.ndarray  # (n,)
    n_neighbors: int
    reach_floor: float
    n_features: int

    algorithm = Algorithm.LOF

    def lof_values(self, points: np.ndarray) -> np.ndarray:
        dist = _pairwise_distances(points, self.train)
        k = self.n_neighbors
        nbr = np.argpartition(dist, k - 1, axis=1)[:, :k]
        ndist = np.take_along_axis(dist, nbr, axis=1)
        reach = np.maximum(ndist, self.k_distance[nbr])
        np.maximum(reach, self.reach_floor, out=reach)
        lrd_query = 1.0 / reach.mean(axis=1)
        return self.local_reach_density[nbr].mean(axis=1) / lrd_query

    def score(self, points: np.ndarray) -> np.ndarray:
        return -self.lof_values(points)

    def to_state(self) -> dict:
        return {
            "train": self.train,
            "k_distance": self.k_distance,
            "local_reach_density": self.local_reach_density,
            "meta": np.array([float(self.n_neighbors), self.reach_floor, float(self.n_features)]),
        }

    @classmethod
    def from_state(cls, state: dict) -> "LofModel":
        k, floor, d = state["meta"]
        return cls(
            train=_readonly(state["train"]),
            k_distance=_readonly(state["k_distance"]),
            local_reach_density=_readonly(state["local_reach_density"]),
            n_neighbors=int(k),
            reach_floor=float(floor),
            n_features=int(d),
        )


def _fit_lof(x: np.ndarray, config: DetectorConfig) -> LofModel:
    n, d = x.shape
    k = config.lof_neighbors
    if k >= n:
        raise ValueError(f"lof_neighbors={k} must be smaller than the training size {n}")
    dist = _pairwise_distances(x, x)
    np.fill_diagonal(dist, np.inf)
    diameter = float(np.max(np.where(np.isfinite(dist), dist, 0.0)))
    floor = float(np.finfo(np.float64).eps) * (diameter if diameter > 0.0 else 1.0)

    nbr = np.argpartition(dist, k - 1, axis=1)[:, :k]
    ndist = np.take_along_axis(dist, nbr, axis=1)
    k_distance = ndist.max(axis=1)
    reach = np.maximum(ndist, k_distance[nbr])
    np.maximum(reach, floor, out=reach)
    lrd = 1.0 / reach.mean(axis=1)
    return LofModel(
        train=_readonly(x.copy()),
        k_distance=_readonly(k_distance),
        local_reach_density=_readonly(lrd),
        n_neighbors=k,
        reach_floor=floor,
        n_features=d,
    )


# ---------------------------------------------------------------------------
# PCA reconstruction error
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (d,)
    components: np.ndarray  # (m, d) rows = retained axes, descending eigenvalue

    algorithm = Algorithm.PCA

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    def squared_reconstruction_error(self, points: np.ndarray) -> np.ndarray:
        centered = points - self.mean
        residual = centered - (centered @ self.components.T) @ self.components
        return np.sum(residual * residual, axis=1)

    def score(self, points: np.ndarray) -> np.ndarray:
        return -self.squared_reconstruction_error(points)

    def to_state(self) -> dict:
        return {"mean": self.mean, "components": self.components}

    @classmethod
    def from_state(cls, state: dict) -> "PcaModel":
        return cls(mean=_readonly(state["mean"]), components=_readonly(state["components"]))


def _fit_pca(x: np.ndarray, config: DetectorConfig) -> PcaModel:
    n, d = x.shape
    n_comp = config.pca_components
    if n_comp > d:
        raise ValueError(f"pca_components={n_comp} exceeds the feature dimension {d}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    _, eigvecs = np.linalg.eigh(cov)
    components = eigvecs[:, ::-1][:, :n_comp].T
    # deterministic sign: the largest-magnitude entry of each axis is positive
    peak = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(n_comp), peak])
    signs[signs == 0] = 1.0
    components = components * signs[:, None]
    return PcaModel(mean=_readonly(mean), components=_readonly(components))


# ---------------------------------------------------------------------------
# Uniform interface
# ---------------------------------------------------------------------------

_MODEL_CLASSES = {
    Algorithm.ISOLATION_FOREST: IsolationForestModel,
    Algorithm.LOF: LofModel,
    Algorithm.PCA: PcaModel,
}


def fit(config: DetectorConfig, train) -> object:
    """Fit the configured detector; deterministic given (config.seed, train)."""
    x = as_feature_matrix(train, name="train")
    if x.shape[0] < 2:
        raise ValueError(f"fitting requires at least 2 training rows, got {x.shape[0]}")
    if config.algorithm is Algorithm.ISOLATION_FOREST:
        return _fit_isolation_forest(x, config)
    if config.algorithm is Algorithm.LOF:
        return _fit_lof(x, config)
    if config.algorithm is Algorithm.PCA:
        return _fit_pca(x, config)
    raise ValueError(f"unknown algorithm: {config.algorithm!r}")


def score(model, points) -> np.ndarray:
    """Conformity scores for ``points``, one finite float per row."""
    x = as_feature_matrix(points, name="points")
    if x.shape[1] != model.n_features:
        raise ValueError(
            f"dimension mismatch: model expects d={model.n_features}, got d={x.shape[1]}"
        )
    return model.score(x)


def model_class_for(algorithm: Algorithm):
    return _MODEL_CLASSES[algorithm]
