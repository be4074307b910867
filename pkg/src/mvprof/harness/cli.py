"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or configuration, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from ..configs import config_path
from ..errors import FormatError, MvprofError, NumericError
from ..fusion import ProficiencyClassifier
from ..metrics import evaluate_generative, evaluate_labels
from ..rng import SplitMix64
from ..sampler import SamplerConfig, pats_plan, uniform_plan
from .checkpoint import load_into, read_checkpoint
from .config import RunConfig, load_config
from .data import generate_dataset
from .gradsuite import FAMILIES, TOLERANCE, run_suites
from .models import GenerativeModel, build_classifier
from .train import classifier_predict, dump_report, train_discriminative, train_generative

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mvprof", description="Multi-view proficiency toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="print a frame plan as JSON")
    p.add_argument("--video-length", type=int, required=True)
    p.add_argument("--n-target", type=int, required=True)
    p.add_argument("--n-segments", type=int, default=1)
    p.add_argument("--d-s", type=int, default=1, help="segment duration in frames")
    p.add_argument("--uniform", action="store_true", help="spread frames over the whole clip")

    for name, shipped in (("train-cls", "default"), ("train-gen", "generative")):
        p = sub.add_parser(name, help=f"train the {'classifier' if name == 'train-cls' else 'generative'} pipeline")
        p.add_argument("--config", default=None, help=f"JSON config (default: shipped {shipped}.json)")
        p.add_argument("--out", default=f"runs/{name}", help="directory for checkpoint.skf and report.json")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        p.set_defaults(shipped=shipped)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", default=None, help="dataset config (default: the checkpoint's own)")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suites")
    p.add_argument("--module", choices=("all",) + FAMILIES, default="all")
    return parser


def _sample(args) -> int:
    if args.video_length < 1:
        raise _UsageError("--video-length must be >= 1")
    if args.uniform:
        plan = uniform_plan(args.video_length, args.n_target)
    else:
        plan = pats_plan(args.video_length, SamplerConfig(args.n_target, args.n_segments, args.d_s))
    print(json.dumps(plan.to_dict(), sort_keys=True))
    return EXIT_OK


def _train(args) -> int:
    cfg = load_config(args.config or config_path(args.shipped), args.overrides)
    run = train_discriminative if args.command == "train-cls" else train_generative
    result = run(cfg)
    ckpt, rep = result.write(args.out, cfg)
    print(json.dumps(result.report.to_dict(), sort_keys=True))
    print(f"wrote {ckpt} and {rep}", file=sys.stderr)
    return EXIT_OK


def load_model(path) -> tuple[str, RunConfig, object]:
    """Rebuild the model stored in a checkpoint; returns ``(pipeline, config, model)``."""
    meta, params = read_checkpoint(path)
    cfg = RunConfig.from_dict(meta.get("config", {}))
    pipeline = meta.get("pipeline")
    rng = SplitMix64(0)
    if pipeline == "discriminative":
        model = build_classifier(cfg, rng)
    elif pipeline == "generative":
        model = GenerativeModel(cfg, rng)
    else:
        raise FormatError(f"checkpoint names an unknown pipeline {pipeline!r}")
    return pipeline, cfg, load_into(model, params)


def _eval(args) -> int:
    pipeline, ckpt_cfg, model = load_model(args.checkpoint)
    cfg = load_config(args.config, args.overrides) if args.config else ckpt_cfg
    samples = generate_dataset(cfg.data).split(args.split)
    if isinstance(model, ProficiencyClassifier):
        report = evaluate_labels(classifier_predict(model, samples), samples)
    else:
        report = evaluate_generative(model, samples)
    sys.stdout.write(dump_report({"pipeline": pipeline, "split": args.split,
                                  "report": report.to_dict()}))
    return EXIT_OK


def _gradcheck(args) -> int:
    results = run_suites(args.module)
    for r in results:
        print(r.line())
    worst = max(r.max_relative_error for r in results)
    total = sum(r.instances for r in results)
    print(f"max relative error {worst:.3e} over {total} instances (tolerance {TOLERANCE:g})")
    return EXIT_OK if all(r.passed() for r in results) else EXIT_NUMERIC


_COMMANDS = {"sample": _sample, "train-cls": _train, "train-gen": _train, "eval": _eval,
             "gradcheck": _gradcheck}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MvprofError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
