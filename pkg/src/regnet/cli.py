"""Command-line entry point: ``regnet gen-data | enroll | verify | eval | calibrate``.

Exit codes: 0 success (or accept), 1 reject, 2 usage/config/data error,
3 training divergence.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import metrics
from .config import load_config
from .data import generate_synthetic, load_dataset, make_enrollment, read_image, save_dataset
from .decision import calibrate_empirical
from .exceptions import InsufficientDataError, RegNetError, TrainingDivergedError
from .model import load_model, save_model
from .trainer import enroll, format_telemetry

log = logging.getLogger("regnet")

EXIT_OK, EXIT_REJECT, EXIT_ERROR, EXIT_DIVERGED = 0, 1, 2, 3
HIST_BINS = 30


def cmd_gen_data(args):
    cfg = load_config(args.config)
    cfg.require("gen-data")
    pool = generate_synthetic(cfg.synth_params(), authorized_id=cfg["authorized_id"])
    save_dataset(pool, args.out)
    print(f"wrote {len(pool)} samples to {args.out}")
    return EXIT_OK


def cmd_enroll(args):
    cfg = load_config(args.config)
    cfg.require("enroll")
    pool = load_dataset(args.data)
    train, calib, test = make_enrollment(
        pool,
        cfg["authorized_id"],
        cfg["holdout_unauth"],
        calib_fraction=cfg["calib_fraction"],
        test_fraction=cfg["test_fraction"],
        seed=cfg["seed"],
    )
    train_cfg = cfg.train_config()
    if train_cfg.steps == 0:
        log.warning("steps = 0: writing an untrained model")

    def emit(record):
        print(format_telemetry(record), flush=True)

    artifact = enroll(
        train,
        cfg.encoder_config(train.samples[0].image.shape),
        cfg.target(),
        train_cfg,
        objective=cfg["objective"],
        calib_set=calib,
        on_telemetry=emit,
    )
    save_model(artifact, args.out)
    test_out = cfg["test_out"] or args.out + ".test"
    save_dataset(test, test_out)
    print(f"model written to {args.out} (tau={artifact.threshold.tau!r}); test split written to {test_out}")
    return EXIT_OK


def cmd_verify(args):
    artifact = load_model(args.model)
    stat = float(artifact.scores(read_image(args.image))[0])
    accepted = stat <= artifact.threshold.tau
    print(f"{'accept' if accepted else 'reject'} {stat!r}")
    return EXIT_OK if accepted else EXIT_REJECT


def score_dataset(artifact, dataset):
    scores = artifact.scores(dataset.images)
    labels = dataset.labels
    return metrics.ScoreSet(scores[labels == 1], scores[labels == 0])


def cmd_eval(args):
    artifact = load_model(args.model)
    dataset = load_dataset(args.data, split_tag="test")
    scores = score_dataset(artifact, dataset)
    scores.require_both()
    os.makedirs(args.out, exist_ok=True)
    report = metrics.format_report(metrics.summary(scores))
    files = {
        "report.txt": report,
        "roc.csv": metrics.format_roc(metrics.roc(scores)),
        "hist_auth.csv": metrics.format_histogram(metrics.histogram(scores.authorized, HIST_BINS)),
        "hist_unauth.csv": metrics.format_histogram(metrics.histogram(scores.unauthorized, HIST_BINS)),
    }
    for name, text in files.items():
        with open(os.path.join(args.out, name), "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    print(report, end="")
    return EXIT_OK


def cmd_calibrate(args):
    artifact = load_model(args.model)
    dataset = load_dataset(args.data)
    unauth = dataset.images[dataset.labels == 0]
    if len(unauth) == 0:
        raise InsufficientDataError(f"{args.data} has no unauthorized samples to calibrate on")
    scores = metrics.ScoreSet(np.zeros(0), artifact.scores(unauth))
    artifact.threshold = calibrate_empirical(scores, args.target_far)
    save_model(artifact, args.model)
    print(f"tau={artifact.threshold.tau!r} at target FAR {args.target_far}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="regnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset directory")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("enroll", help="train a model for the configured authorized identity")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("verify", help="accept or reject one image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval", help="write report, ROC and histograms for a labelled dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("calibrate", help="recalibrate the model threshold in place")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target-far", type=float, required=True)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (RegNetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
