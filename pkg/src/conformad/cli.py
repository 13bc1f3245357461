"""Command-line front end: calibrate, score, evaluate, sweep, synth.

Exit codes: 0 on success, 1 on validation errors (including bad flags),
2 on I/O errors. Diagnostics go to stderr; data goes to files, or to
stdout with ``--out -``.
"""

from __future__ import annotations

import argparse
import sys

import pandas as pd

from .bench import (
    ExperimentConfig,
    check_loo_gate,
    format_reports,
    load_csv,
    make_synthetic,
    run_calibration_sweep,
    run_experiment,
)
from .conformal import Strategy, StrategyKind, calibrate, parse_method, predict_p_values
from .detectors import Algorithm, DetectorConfig
from .multiplicity import benjamini_hochberg
from .serialize import ModelFileError, load_detector, save_detector

__all__ = ["main"]

_DETECTOR_NAMES = {
    "iforest": Algorithm.ISOLATION_FOREST,
    "lof": Algorithm.LOF,
    "pca": Algorithm.PCA,
}

_METHOD_CHOICES = ["split", "jackknife", "jackknife+", "cv", "cv+", "jab", "jab+"]


def _write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)


def _detector_config(args) -> DetectorConfig:
    return DetectorConfig(
        algorithm=_DETECTOR_NAMES[args.detector],
        if_trees=args.trees,
        if_subsample=args.subsample,
        lof_neighbors=args.lof_k,
        pca_components=args.pca_components,
        seed=args.seed,
    )


def _strategy(args) -> Strategy:
    kind, plus = parse_method(args.method)
    if args.k is not None and kind in (StrategyKind.SPLIT, StrategyKind.JACKKNIFE):
        raise ValueError(f"--k is not valid with --method {args.method}")
    if args.ratio is not None and kind is not StrategyKind.JAB:
        raise ValueError(f"--ratio is only valid with jab methods, not {args.method}")
    kwargs = {}
    if args.k is not None:
        kwargs["k"] = args.k
    if args.ratio is not None:
        kwargs["bootstrap_ratio"] = args.ratio
    if getattr(args, "cal_cap", None) is not None:
        kwargs["split_calib_cap"] = args.cal_cap
    return Strategy(kind=kind, plus=plus, **kwargs)


def _add_detector_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--detector", choices=sorted(_DETECTOR_NAMES), default="iforest")
    parser.add_argument("--trees", type=int, default=100, help="isolation forest tree count")
    parser.add_argument(
        "--subsample", type=int, default=256, help="isolation forest per-tree subsample"
    )
    parser.add_argument("--lof-k", type=int, default=20, help="LOF neighbor count")
    parser.add_argument("--pca-components", type=int, default=3, help="retained PCA axes")


def _add_method_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--method", choices=_METHOD_CHOICES, default="split")
    parser.add_argument("--k", type=int, default=None, help="cv folds or jab bootstrap draws")
    parser.add_argument("--ratio", type=float, default=None, help="jab resampling ratio")


def cmd_calibrate(args) -> int:
    data = load_csv(args.train_csv)
    strategy = _strategy(args)
    check_loo_gate(strategy, data.n, force=args.force_loo)
    det = calibrate(strategy, _detector_config(args), data.features, seed=args.seed)
    save_detector(det, args.out)
    sys.stdout.write(
        f"calibrated {strategy.label()} on {data.n} rows: n_cal={det.n_cal}, "
        f"detector={args.detector}, written to {args.out}\n"
    )
    return 0


def cmd_score(args) -> int:
    det = load_detector(args.model)
    data = load_csv(args.batch_csv)
    pvals = predict_p_values(det, data.features)
    decisions = benjamini_hochberg(pvals, args.alpha)
    lines = ["row_index,p_value,p_adjusted,reject"]
    for i in range(pvals.size):
        lines.append(
            f"{i},{pvals[i]:.17g},{decisions.adjusted[i]:.17g},{int(decisions.rejected[i])}"
        )
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def _experiment_config(args) -> ExperimentConfig:
    return ExperimentConfig(
        detector=_detector_config(args),
        strategy=_strategy(args),
        j=args.j,
        l=args.l,
        alpha=args.alpha,
        n_train_frac=args.train_frac,
        cal_cap=args.cal_cap,
        test_cap=args.test_cap,
        outlier_frac_test=args.outlier_frac,
        seed=args.seed,
        force_loo=args.force_loo,
    )


def cmd_evaluate(args) -> int:
    if args.sweep is not None:
        raise ValueError(
            "--sweep is not an evaluate option; use the `sweep` subcommand for "
            "calibration-size sweeps"
        )
    data = load_csv(args.labeled_csv, label_column=args.label_col)
    report = run_experiment(_experiment_config(args), data)
    sys.stdout.write(format_reports([report]))
    if args.out is not None:
        _write_text(args.out, report.to_json() + "\n")
    return 0


def cmd_sweep(args) -> int:
    kind, _ = parse_method(args.method)
    if kind is not StrategyKind.JAB:
        raise ValueError(f"sweep requires --method jab or jab+, got {args.method}")
    sizes = [int(part) for part in args.sizes.split(",") if part.strip()]
    data = load_csv(args.labeled_csv, label_column=args.label_col)
    reports = run_calibration_sweep(_experiment_config(args), data, sizes)
    sys.stdout.write(format_reports(reports))
    if args.out is not None:
        payload = "[\n" + ",\n".join(r.to_json() for r in reports) + "\n]\n"
        _write_text(args.out, payload)
    return 0


def cmd_synth(args) -> int:
    data = make_synthetic(args.n_inlier, args.n_outlier, args.d, args.shift, seed=args.seed)
    frame = pd.DataFrame(data.features, columns=[f"x{i}" for i in range(args.d)])
    frame["is_outlier"] = data.is_outlier.astype(int)
    text = frame.to_csv(index=False)
    _write_text(args.out, text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conformad",
        description=(
            "Conformal anomaly detection: calibrate one-class scorers with "
            "resampling, emit conformal p-values, and control the batch FDR "
            "with the Benjamini-Hochberg procedure."
        ),
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    cal = sub.add_parser("calibrate", help="calibrate a detector on an inlier CSV")
    cal.add_argument("train_csv")
    _add_detector_flags(cal)
    _add_method_flags(cal)
    cal.add_argument("--cal-cap", type=int, default=None, help="split calibration size cap")
    cal.add_argument("--seed", type=int, default=0)
    cal.add_argument("--force-loo", action="store_true", help="override the low-data gate")
    cal.add_argument("--out", required=True, help="output model file")
    cal.set_defaults(func=cmd_calibrate)

    sco = sub.add_parser("score", help="p-values and BH decisions for a batch CSV")
    sco.add_argument("model")
    sco.add_argument("batch_csv")
    sco.add_argument("--alpha", type=float, default=0.2, help="nominal FDR level")
    sco.add_argument("--out", default="-", help="results CSV path, or - for stdout")
    sco.set_defaults(func=cmd_score)

    ev = sub.add_parser("evaluate", help="replicated FDR/power experiment on a labeled CSV")
    ev.add_argument("labeled_csv")
    ev.add_argument("--label-col", required=True)
    _add_detector_flags(ev)
    _add_method_flags(ev)
    ev.add_argument("--j", type=int, default=20, help="training replicates")
    ev.add_argument("--l", type=int, default=20, help="test sets per replicate")
    ev.add_argument("--alpha", type=float, default=0.2)
    ev.add_argument("--train-frac", type=float, default=0.5)
    ev.add_argument("--cal-cap", type=int, default=2000)
    ev.add_argument("--test-cap", type=int, default=1000)
    ev.add_argument("--outlier-frac", type=float, default=0.10)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--force-loo", action="store_true")
    ev.add_argument("--sweep", default=None, help=argparse.SUPPRESS)
    ev.add_argument("--out", default=None, help="also write the report as JSON")
    ev.set_defaults(func=cmd_evaluate)

    sw = sub.add_parser("sweep", help="calibration-size sweep for jab methods")
    sw.add_argument("labeled_csv")
    sw.add_argument("--label-col", required=True)
    sw.add_argument("--sizes", required=True, help="comma-separated target calibration sizes")
    _add_detector_flags(sw)
    sw.add_argument("--method", choices=_METHOD_CHOICES, default="jab")
    sw.add_argument("--k", type=int, default=None, help=argparse.SUPPRESS)
    sw.add_argument("--ratio", type=float, default=None, help="jab resampling ratio")
    sw.add_argument("--j", type=int, default=20)
    sw.add_argument("--l", type=int, default=20)
    sw.add_argument("--alpha", type=float, default=0.2)
    sw.add_argument("--train-frac", type=float, default=0.5)
    sw.add_argument("--cal-cap", type=int, default=2000)
    sw.add_argument("--test-cap", type=int, default=1000)
    sw.add_argument("--outlier-frac", type=float, default=0.10)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--force-loo", action="store_true")
    sw.add_argument("--out", default=None, help="also write the reports as JSON")
    sw.set_defaults(func=cmd_sweep)

    syn = sub.add_parser("synth", help="write a synthetic labeled dataset")
    syn.add_argument("--n-inlier", type=int, required=True)
    syn.add_argument("--n-outlier", type=int, required=True)
    syn.add_argument("--d", type=int, required=True)
    syn.add_argument("--shift", type=float, required=True)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--out", required=True, help="output CSV path, or - for stdout")
    syn.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; the contract here is 1 for any
        # validation failure and 0 for --help
        return 0 if not exc.code else 1
    try:
        return args.func(args)
    except ModelFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
