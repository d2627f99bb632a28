"""Command-line entry point.

Subcommands run the whole pipeline or a single stage against a JSON config:

    protoclass pipeline          --config cfg.json [--output DIR] [--seed N]
    protoclass pretrain          --config cfg.json ...
    protoclass sample-prototypes --config cfg.json ...
    protoclass finetune          --config cfg.json ...
    protoclass evaluate          --config cfg.json ...
    protoclass sweep-silhouette  --config cfg.json ...

Exit codes: 0 success, 1 configuration error or missing upstream artifact,
2 runtime failure (diagnostics on stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from .config import ConfigError, apply_overrides, parse_config
from .pipeline import (
    MissingArtifactError,
    run_pipeline,
    stage_evaluate,
    stage_finetune,
    stage_pretrain,
    stage_prototypes,
    stage_sweep,
)

_STAGES = {
    "pipeline": run_pipeline,
    "pretrain": stage_pretrain,
    "sample-prototypes": stage_prototypes,
    "finetune": stage_finetune,
    "evaluate": stage_evaluate,
    "sweep-silhouette": stage_sweep,
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to a JSON pipeline config")
    parser.add_argument("--output", default=None, help="override the output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the global seed")
    parser.add_argument("--skip-cpt", action="store_true", help="bypass contrastive pre-training")
    parser.add_argument("--skip-dr", action="store_true", help="bypass dimensionality reduction")
    parser.add_argument("--skip-sft", action="store_true", help="bypass semi-supervised fine-tuning")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protoclass",
        description="Unsupervised classification via contrastive pre-training, "
        "centroid prototype sampling, and semi-supervised fine-tuning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _STAGES:
        stage_parser = sub.add_parser(name, help=f"run the {name} step")
        _add_common(stage_parser)
    return parser


def _load(args) -> "PipelineConfig":
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    doc = apply_overrides(
        doc,
        output_dir=args.output,
        seed=args.seed,
        skip_cpt=args.skip_cpt,
        skip_dr=args.skip_dr,
        skip_sft=args.skip_sft,
    )
    return parse_config(doc)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        _STAGES[args.command](cfg, quiet=args.quiet)
    except (ConfigError, MissingArtifactError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc(file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
