"""Command-line entry point.

Subcommands mirror the pipeline phases (train-ann, calibrate, convert,
train-snn, eval, profile) plus run-all. Flags override config-file values,
which override defaults. Exit codes: 0 success, 2 configuration, 3
ingestion, 4 training, 5 emission, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ExperimentConfig
from .errors import SnnkitError
from .pipeline import Experiment, emit_report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snnkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train-ann", "calibrate", "convert", "train-snn", "eval", "profile", "run-all"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--encoder", choices=("hybrid", "direct", "rate"), default=None)
        p.add_argument("--timesteps", type=int, default=None, help="override total timesteps")
        p.add_argument("--out", default=None, help="override the output directory")
        if name in ("eval", "profile"):
            p.add_argument("--model", default=None, help="model file name inside the output directory")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.encoder is not None:
        cfg.encoder = args.encoder
    if args.out is not None:
        cfg.out_dir = args.out
    if args.timesteps is not None:
        net = cfg.network.to_dict()
        net["total_timesteps"] = args.timesteps
        cfg.network = type(cfg.network).from_dict(net)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        exp = Experiment(cfg)
        if args.command == "run-all":
            report = exp.run_all()
            print(
                json.dumps(
                    {
                        "accuracy_ann": report.accuracy_ann,
                        "accuracy_converted": report.accuracy_converted,
                        "accuracy_finetuned": report.accuracy_finetuned,
                        "energy_ratio": report.energy.ratio if report.energy else None,
                        "out_dir": cfg.out_dir,
                    }
                )
            )
        elif args.command == "train-ann":
            exp.train_ann()
            print(json.dumps({"accuracy_ann": exp.report.accuracy_ann}))
        elif args.command == "calibrate":
            thresholds = exp.calibrate()
            print(json.dumps({"thresholds": thresholds}))
        elif args.command == "convert":
            exp.convert()
            print(json.dumps({"accuracy_converted": exp.report.accuracy_converted}))
        elif args.command == "train-snn":
            exp.train_snn()
            print(json.dumps({"final_loss": exp.report.snn_loss_curve[-1]}))
        elif args.command == "eval":
            acc = exp.eval(model_file=args.model or "snn.model")
            print(json.dumps({"accuracy": acc}))
        elif args.command == "profile":
            report = exp.profile(model_file=args.model or "snn.model")
            emit_report(exp.report, cfg.out_dir)
            print(
                json.dumps(
                    {
                        "e_ann_pj": report.e_ann_pj,
                        "e_snn_pj": report.e_snn_pj,
                        "ratio": report.ratio,
                    }
                )
            )
        return 0
    except SnnkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - unexpected failures
        print(f"unexpected error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
