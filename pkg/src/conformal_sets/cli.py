"""Command-line interface.

Exit codes: 0 on success, 1 on data or configuration errors, 2 on usage
errors (argparse's default).  Commands that write a report can also render
matplotlib figures next to it via --plot-dir.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, calibration, io, metrics, synthgen
from .calibration import CCP, MARGINAL, OPTION_I, OPTION_II, RC3P
from .errors import ConfigError, ConformalError
from .prediction import predict
from .scores import APS, HPS, RAPS, ScoreConfig

log = logging.getLogger(__name__)


def _score_config(args) -> ScoreConfig:
    return ScoreConfig(
        kind=args.score,
        lam=args.lam,
        k_reg=args.kreg,
        randomize=not args.no_randomize,
        seed=args.seed,
    ).validated()


def _add_score_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--score", choices=[APS, RAPS, HPS], default=APS,
                   help="nonconformity score family")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0,
                   help="rank penalty weight (raps only)")
    p.add_argument("--kreg", type=int, default=1,
                   help="penalty-free rank (raps only)")
    p.add_argument("--no-randomize", action="store_true",
                   help="disable score tie-break randomization")
    p.add_argument("--seed", type=int, default=0, help="score tie-break seed")


def _parse_overrides(spec: str | None) -> dict | None:
    """Parse 'class=k' pairs, comma-separated, e.g. '0=2,3=1'."""
    if not spec:
        return None
    out = {}
    for item in spec.split(","):
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not class=k")
        cls, val = item.split("=", 1)
        try:
            out[int(cls)] = int(val)
        except ValueError:
            raise ConfigError(f"override {item!r} is not class=k") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conformal-sets",
        description="Split conformal prediction sets with class-conditional "
                    "coverage for precomputed classifier probabilities.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit thresholds from a calibration set")
    p.add_argument("--probs", required=True, help="probability matrix (.csv or .rcm)")
    p.add_argument("--labels", required=True, help="true labels, one per line")
    p.add_argument("--alpha", type=float, required=True, help="miscoverage level")
    p.add_argument("--method", choices=[MARGINAL, CCP, RC3P], required=True)
    p.add_argument("--option", type=int, choices=[OPTION_I, OPTION_II],
                   default=OPTION_II, help="rank-budget policy (rc3p)")
    p.add_argument("--k-override", default=None,
                   help="rc3p option 1: per-class rank caps, e.g. 0=2,3=1")
    p.add_argument("--g", type=float, default=0.0,
                   help="coverage inflation g/sqrt(n_y)")
    _add_score_flags(p)
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="build prediction sets for a test matrix")
    p.add_argument("--model", required=True, help="model JSON from calibrate")
    p.add_argument("--probs", required=True, help="test probability matrix")
    p.add_argument("--out", required=True, help="prediction sets CSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="coverage metrics for prediction sets")
    p.add_argument("--sets", required=True, help="prediction sets CSV")
    p.add_argument("--labels", required=True, help="true test labels")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--classes", type=int, required=True, help="number of classes K")
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.add_argument("--csv", default=None, help="also write a flat CSV here")
    p.add_argument("--plot-dir", default=None,
                   help="render coverage and size figures into this directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("diagnose",
                       help="size-accounting diagnostics for an rc3p/ccp pair")
    p.add_argument("--rc3p", required=True, help="rc3p model JSON")
    p.add_argument("--ccp", required=True, help="ccp model JSON")
    p.add_argument("--probs", required=True, help="evaluation matrix")
    p.add_argument("--labels", required=True, help="labels for the matrix")
    p.add_argument("--out", required=True, help="diagnostics JSON path")
    p.add_argument("--csv-prefix", default=None,
                   help="write <prefix>_sigma.csv and <prefix>_rank_freq.csv")
    p.add_argument("--plot-dir", default=None,
                   help="render sigma and rank-frequency figures here")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("synth", help="generate a synthetic calibration/test pair")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--decay", choices=list(synthgen.DECAY_KINDS), default=None,
                   help="long-tail profile for the training counts")
    p.add_argument("--rho", type=float, default=0.5, help="imbalance ratio")
    p.add_argument("--n-train", type=int, default=0,
                   help="training budget shaping the per-class sharpness")
    p.add_argument("--n-cal", type=int, required=True,
                   help="calibration examples per class")
    p.add_argument("--n-test", type=int, required=True,
                   help="test examples per class")
    p.add_argument("--temperature", type=float, default=1.5,
                   help="classifier sharpness")
    p.add_argument("--noise", type=float, default=0.05,
                   help="uniform mixing weight in [0, 1]")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--format", choices=["csv", "rcm"], default="csv",
                   help="matrix file format")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify-coverage",
                       help="Monte-Carlo coverage of a method on a synthetic world")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--method", choices=[MARGINAL, CCP, RC3P], required=True)
    p.add_argument("--option", type=int, choices=[OPTION_I, OPTION_II],
                   default=OPTION_II)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--g", type=float, default=0.0)
    p.add_argument("--n-cal", type=int, required=True,
                   help="calibration examples per class")
    p.add_argument("--n-test", type=int, required=True,
                   help="test examples per class")
    p.add_argument("--replications", type=int, default=10)
    p.add_argument("--temperature", type=float, default=1.5)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--decay", choices=list(synthgen.DECAY_KINDS), default=None,
                   help="shape per-class sharpness from a training profile")
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--n-train", type=int, default=0)
    _add_score_flags(p)
    p.add_argument("--world-seed", type=int, default=None,
                   help="world seed (defaults to --seed)")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_verify_coverage)

    return parser


def _sharpness(args) -> tuple | None:
    if args.decay is None:
        return None
    if args.n_train < args.classes:
        raise ConfigError("--decay requires --n-train of at least one per class")
    spec = synthgen.DecaySpec(args.decay, args.rho, args.n_train, args.classes)
    counts = synthgen.decay_counts(spec)
    return tuple(sharpness_from_train_counts(counts))


def sharpness_from_train_counts(counts) -> np.ndarray:
    """Map training counts to per-class sharpness multipliers.

    Classes trained on more data separate better; a logarithmic scale keeps
    the spread gentle: count c maps to log(1 + c) / log(1 + max_count).
    """
    counts = np.asarray(counts, dtype=np.float64)
    top = counts.max()
    return np.log1p(counts) / np.log1p(top)


def cmd_calibrate(args) -> int:
    probs = io.read_probability_matrix(args.probs)
    labels = io.read_labels(args.labels)
    cfg = _score_config(args)
    if args.method == MARGINAL:
        model = calibration.calibrate_marginal(probs, labels, cfg, args.alpha, args.g)
    elif args.method == CCP:
        model = calibration.calibrate_ccp(probs, labels, cfg, args.alpha, args.g)
    else:
        model = calibration.calibrate_rc3p(
            probs, labels, cfg, args.alpha, args.g,
            option=args.option, k_override=_parse_overrides(args.k_override),
        )
    io.write_model(args.out, model)
    log.info("wrote %s", args.out)
    return 0


def cmd_predict(args) -> int:
    model = io.read_model(args.model)
    probs = io.read_probability_matrix(args.probs)
    batch = predict(model, probs)
    io.write_sets(args.out, batch)
    log.info("wrote %s (%d rows)", args.out, batch.n)
    return 0


def cmd_evaluate(args) -> int:
    sets = io.read_sets(args.sets)
    labels = io.read_labels(args.labels)
    report = metrics.evaluate(sets, labels, args.alpha, args.classes)
    io.write_metrics_json(args.out, report)
    if args.csv:
        io.write_metrics_csv(args.csv, report)
    if args.plot_dir:
        from . import plots

        plot_dir = Path(args.plot_dir)
        plot_dir.mkdir(parents=True, exist_ok=True)
        plots.save_coverage_figure(report, plot_dir / "coverage.png")
        plots.save_size_figure(report, plot_dir / "set_size.png")
    log.info("wrote %s", args.out)
    return 0


def cmd_diagnose(args) -> int:
    model_rc3p = io.read_model(args.rc3p)
    model_ccp = io.read_model(args.ccp)
    probs = io.read_probability_matrix(args.probs)
    labels = io.read_labels(args.labels)

    sigma = metrics.sigma_condition(model_rc3p, model_ccp, probs, labels)
    thm2 = metrics.theorem2_check(model_rc3p, model_ccp, probs, labels)
    freqs = {
        "ccp": metrics.rank_frequency(predict(model_ccp, probs), probs),
        "rc3p": metrics.rank_frequency(predict(model_rc3p, probs), probs),
    }
    doc = {
        "alpha": model_rc3p.alpha,
        "g": model_rc3p.g,
        "K": model_rc3p.num_classes,
        "n": probs.n,
        "sigma": [io.sigma_to_dict(s) for s in sigma],
        "theorem2": [io.thm2_to_dict(t) for t in thm2],
        "rank_frequency": {name: io.rank_freq_to_dict(rf)
                           for name, rf in freqs.items()},
    }
    Path(args.out).write_text(io.dumps_json(doc))
    if args.csv_prefix:
        io.write_sigma_csv(f"{args.csv_prefix}_sigma.csv", sigma)
        io.write_rank_frequency_csv(f"{args.csv_prefix}_rank_freq.csv", freqs)
    if args.plot_dir:
        from . import plots

        plot_dir = Path(args.plot_dir)
        plot_dir.mkdir(parents=True, exist_ok=True)
        plots.save_sigma_figure(sigma, plot_dir / "sigma.png")
        plots.save_rank_frequency_figure(freqs, plot_dir / "rank_frequency.png")
    log.info("wrote %s", args.out)
    return 0


def cmd_synth(args) -> int:
    if args.n_cal < 1 or args.n_test < 1:
        raise ConfigError("--n-cal and --n-test must be >= 1 per class")
    sharp = _sharpness(args)
    world = synthgen.SyntheticWorld(
        num_classes=args.classes, temperature=args.temperature,
        noise=args.noise, seed=args.seed, sharpness=sharp,
    ).validated()
    cal_world = synthgen.SyntheticWorld(
        num_classes=args.classes, temperature=args.temperature,
        noise=args.noise, seed=synthgen.derive_seed(args.seed, 0, 0),
        sharpness=sharp,
    )
    test_world = synthgen.SyntheticWorld(
        num_classes=args.classes, temperature=args.temperature,
        noise=args.noise, seed=synthgen.derive_seed(args.seed, 0, 1),
        sharpness=sharp,
    )
    cal_probs, cal_labels = synthgen.sample_world(
        cal_world, synthgen.balanced_counts(args.classes, args.n_cal))
    test_probs, test_labels = synthgen.sample_world(
        test_world, synthgen.balanced_counts(args.classes, args.n_test))

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = args.format
    io.write_probability_matrix(out / f"cal_probs.{ext}", cal_probs)
    io.write_labels(out / "cal_labels.txt", cal_labels)
    io.write_probability_matrix(out / f"test_probs.{ext}", test_probs)
    io.write_labels(out / "test_labels.txt", test_labels)
    doc = {
        "classes": args.classes,
        "temperature": args.temperature,
        "noise": args.noise,
        "seed": args.seed,
        "n_cal_per_class": args.n_cal,
        "n_test_per_class": args.n_test,
        "decay": args.decay,
        "rho": args.rho if args.decay else None,
        "n_train": args.n_train if args.decay else None,
        "sharpness": list(sharp) if sharp else None,
        "files": {
            "cal_probs": f"cal_probs.{ext}",
            "cal_labels": "cal_labels.txt",
            "test_probs": f"test_probs.{ext}",
            "test_labels": "test_labels.txt",
        },
    }
    (out / "world.json").write_text(io.dumps_json(doc))
    log.info("wrote dataset under %s", out)
    return 0


def cmd_verify_coverage(args) -> int:
    if args.n_cal < 1 or args.n_test < 1:
        raise ConfigError("--n-cal and --n-test must be >= 1 per class")
    sharp = _sharpness(args)
    world_seed = args.world_seed if args.world_seed is not None else args.seed
    world = synthgen.SyntheticWorld(
        num_classes=args.classes, temperature=args.temperature,
        noise=args.noise, seed=world_seed, sharpness=sharp,
    )
    cfg = _score_config(args)
    report = synthgen.oracle_coverage(
        world,
        synthgen.balanced_counts(args.classes, args.n_cal),
        synthgen.balanced_counts(args.classes, args.n_test),
        args.method, cfg, args.alpha, g=args.g,
        replications=args.replications, option=args.option,
    )
    doc = {
        "method": report.method,
        "alpha": report.alpha,
        "g": report.g,
        "K": args.classes,
        "replications": report.replications,
        "n_cal_per_class": args.n_cal,
        "n_test_per_class": args.n_test,
        "coverage_mean": [float(v) for v in report.coverage_mean()],
        "coverage_std": [float(v) for v in report.coverage_std()],
        "apss_mean": report.apss_mean(),
        "apss_std": report.apss_std(),
        "ucr_mean": float(report.ucr.mean()),
        "ucg_mean": float(report.ucg.mean()),
    }
    Path(args.out).write_text(io.dumps_json(doc))
    log.info("wrote %s", args.out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConformalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
