"""Command-line entry point: gen-data, train, eval, bias-exp, report."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from kwasr.experiment import (
    ConfigError,
    ExperimentConfig,
    bias_exp,
    eval_cmd,
    gen_data,
    load_config,
    report_cmd,
    train_cmd,
)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kwasr",
        description="Desk-scale keyword-conditioned transcription experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "gen-data": "Build lexicon and corpora (seed overrides data.seed).",
        "train": "Fit a model on the configured mix (seed overrides train.seed).",
        "eval": "Decode dev/test with and without inference keywords.",
        "bias-exp": "Train all keyword mixes and the batching-policy study.",
        "report": "Join existing artifacts into report.md / report.json.",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to a JSON experiment config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the stage-relevant seed from the config")
        p.add_argument("--out", default=None, help="override config out_dir")
    return parser


def _apply_overrides(config: ExperimentConfig, command: str, seed: int | None,
                     out: str | None) -> ExperimentConfig:
    if out is not None:
        config = replace(config, out_dir=out)
    if seed is not None:
        if command == "gen-data":
            config = replace(config, data=replace(config.data, seed=seed))
        else:
            config = replace(config, train=replace(config.train, seed=seed))
    return config


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config)
        config = _apply_overrides(config, args.command, args.seed, args.out)
        out_dir = config.out_dir
        os.makedirs(out_dir, exist_ok=True)
        runner = {
            "gen-data": gen_data,
            "train": train_cmd,
            "eval": eval_cmd,
            "bias-exp": bias_exp,
            "report": report_cmd,
        }[args.command]
        artifacts = runner(config, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return 3
    for name, path in sorted(artifacts.items()):
        print(f"{name}\t{path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
