#!/usr/bin/env python3
"""Strategy-by-detector grid on synthetic data.

Runs every calibration strategy against the chosen detector on a Gaussian
inlier/shifted-outlier dataset and prints one aggregate table, the same
layout the `evaluate` subcommand produces per strategy.

Example:
    python scripts/run_synthetic_grid.py --detector iforest --j 20 --l 20
"""

import argparse
import sys
import time

from conformad.bench import ExperimentConfig, format_reports, make_synthetic, run_experiment
from conformad.conformal import Strategy, StrategyKind
from conformad.detectors import Algorithm, DetectorConfig

STRATEGIES = [
    Strategy(StrategyKind.SPLIT),
    Strategy(StrategyKind.CV, k=10),
    Strategy(StrategyKind.CV, plus=True, k=10),
    Strategy(StrategyKind.JACKKNIFE),
    Strategy(StrategyKind.JACKKNIFE, plus=True),
    Strategy(StrategyKind.JAB, k=20),
    Strategy(StrategyKind.JAB, plus=True, k=20),
]

DETECTORS = {
    "iforest": Algorithm.ISOLATION_FOREST,
    "lof": Algorithm.LOF,
    "pca": Algorithm.PCA,
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--detector", choices=sorted(DETECTORS), default="iforest")
    parser.add_argument("--n-inlier", type=int, default=500)
    parser.add_argument("--n-outlier", type=int, default=100)
    parser.add_argument("--d", type=int, default=2)
    parser.add_argument("--shift", type=float, default=4.0)
    parser.add_argument("--j", type=int, default=20)
    parser.add_argument("--l", type=int, default=20)
    parser.add_argument("--alpha", type=float, default=0.2)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--skip-loo", action="store_true",
                        help="skip the two jackknife strategies (fastest run)")
    args = parser.parse_args()

    detector = DetectorConfig(
        algorithm=DETECTORS[args.detector],
        pca_components=min(3, args.d),
    )
    data = make_synthetic(args.n_inlier, args.n_outlier, args.d, args.shift, seed=args.seed)

    reports = []
    for strategy in STRATEGIES:
        if args.skip_loo and strategy.kind is StrategyKind.JACKKNIFE:
            continue
        config = ExperimentConfig(
            detector=detector,
            strategy=strategy,
            j=args.j,
            l=args.l,
            alpha=args.alpha,
            seed=args.seed,
        )
        started = time.perf_counter()
        report = run_experiment(config, data)
        print(f"  {strategy.label():<14} done in {time.perf_counter() - started:6.1f}s",
              file=sys.stderr)
        reports.append(report)

    print(format_reports(reports))
    return 0


if __name__ == "__main__":
    sys.exit(main())
