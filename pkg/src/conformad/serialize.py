"""Single-file persistence for calibrated detectors.

The format is a zip of raw numpy arrays (``numpy.savez``) plus one JSON
metadata entry holding the format version, the strategy and the detector
configuration. Round-tripping is bit-exact: a loaded detector produces
byte-identical p-values.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict

import numpy as np

from .conformal import Aggregation, CalibratedDetector, Strategy, StrategyKind
from .detectors import Algorithm, DetectorConfig, model_class_for

__all__ = ["FORMAT_VERSION", "ModelFileError", "load_detector", "save_detector"]

FORMAT_VERSION = 1


class ModelFileError(Exception):
    """Raised when a detector file is missing, corrupt, or unsupported."""


def _strategy_to_meta(strategy: Strategy) -> dict:
    meta = asdict(strategy)
    meta["kind"] = strategy.kind.value
    meta["aggregation"] = strategy.aggregation.value
    return meta


def _strategy_from_meta(meta: dict) -> Strategy:
    return Strategy(
        kind=StrategyKind(meta["kind"]),
        plus=bool(meta["plus"]),
        k=int(meta["k"]),
        bootstrap_ratio=float(meta["bootstrap_ratio"]),
        aggregation=Aggregation(meta["aggregation"]),
        split_calib_cap=int(meta["split_calib_cap"]),
    )


def _detector_to_meta(config: DetectorConfig) -> dict:
    meta = asdict(config)
    meta["algorithm"] = config.algorithm.value
    return meta


def _detector_from_meta(meta: dict) -> DetectorConfig:
    return DetectorConfig(
        algorithm=Algorithm(meta["algorithm"]),
        if_trees=int(meta["if_trees"]),
        if_subsample=int(meta["if_subsample"]),
        lof_neighbors=int(meta["lof_neighbors"]),
        pca_components=int(meta["pca_components"]),
        seed=int(meta["seed"]),
    )


def save_detector(det: CalibratedDetector, path: str) -> None:
    """Write a calibrated detector to ``path`` (any extension)."""
    models = [det.final_model] if det.final_model is not None else list(det.fold_models)
    meta = {
        "format_version": FORMAT_VERSION,
        "strategy": _strategy_to_meta(det.strategy),
        "detector": _detector_to_meta(det.detector),
        "n_features": det.n_features,
        "n_models": len(models),
        "has_final": det.final_model is not None,
    }
    arrays = {"calib_scores": det.calib_scores.astype(np.float64)}
    for i, model in enumerate(models):
        for key, value in model.to_state().items():
            arrays[f"model{i}_{key}"] = value
    arrays["meta_json"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    with open(path, "wb") as handle:
        np.savez(handle, **arrays)


def load_detector(path: str) -> CalibratedDetector:
    """Read a calibrated detector previously written by :func:`save_detector`."""
    try:
        with open(path, "rb") as handle:
            payload = io.BytesIO(handle.read())
        with np.load(payload, allow_pickle=False) as archive:
            arrays = {key: archive[key] for key in archive.files}
        meta = json.loads(bytes(arrays.pop("meta_json")).decode("utf-8"))
        if meta["format_version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported format version {meta['format_version']}")
        strategy = _strategy_from_meta(meta["strategy"])
        config = _detector_from_meta(meta["detector"])
        model_cls = model_class_for(config.algorithm)
        models = []
        for i in range(int(meta["n_models"])):
            prefix = f"model{i}_"
            state = {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}
            models.append(model_cls.from_state(state))
        if meta["has_final"]:
            return CalibratedDetector(
                strategy=strategy,
                detector=config,
                n_features=int(meta["n_features"]),
                calib_scores=arrays["calib_scores"],
                final_model=models[0],
            )
        return CalibratedDetector(
            strategy=strategy,
            detector=config,
            n_features=int(meta["n_features"]),
            calib_scores=arrays["calib_scores"],
            fold_models=tuple(models),
        )
    except ModelFileError:
        raise
    except Exception as exc:
        raise ModelFileError(f"cannot read detector file {path!r}: {exc}") from exc
