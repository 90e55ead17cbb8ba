"""Command-line entry points.

``aquaseg-bench`` runs the benchmark described by a manifest (TOML config
file plus flag overrides; flags win). ``aquaseg-sentences`` renders each
sample's reasoning record into the sentence the text-embedding extractor
encodes, closing the loop between the two packages via plain files.

Exit codes: 0 success, 1 data error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

try:
    import tomllib as tomli
except ModuleNotFoundError:
    import tomli

from . import csa, tensor_store
from .bench_runner import RunConfig, run
from .csa import FusionConfig
from .errors import AquasegError, ConfigError
from .gmg import GmgConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_CONFIG_ERROR = 2

_DEFAULTS = {
    "out": "aquaseg-out",
    "beta": 1.2,
    "gamma": 3.0,
    "geo_stage": 3,
    "w_max": 0.5,
    "tau": 0.5,
    "enable_gmg": True,
    "enable_csa": True,
    "enable_templates": True,
    "temperature": 0.01,
    "workers": 1,
    "dump_predictions": False,
}


def _setup_logging() -> None:
    level = os.environ.get("AQUASEG_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _bench_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aquaseg-bench",
        description="Run the underwater open-vocabulary segmentation benchmark.",
    )
    parser.add_argument("--config", type=Path, help="TOML config file")
    parser.add_argument("--manifest", type=Path, help="manifest.json to evaluate")
    parser.add_argument("--out", type=Path, help="report output directory")
    parser.add_argument("--beta", type=float, help="similarity centering coefficient")
    parser.add_argument("--gamma", type=float, help="similarity scaling coefficient")
    parser.add_argument(
        "--geo-stage", type=int, choices=(0, 1, 2, 3), help="geometric encoder stage"
    )
    parser.add_argument("--w-max", type=float, help="fusion weight clamp")
    parser.add_argument("--tau", type=float, help="fusion similarity threshold")
    parser.add_argument(
        "--no-gmg", action="store_true", help="skip the geometric correction stage"
    )
    parser.add_argument(
        "--no-csa", action="store_true", help="skip reasoning-embedding fusion"
    )
    parser.add_argument(
        "--no-templates",
        action="store_true",
        help="use the plain single-prompt embedding bank",
    )
    parser.add_argument("--temperature", type=float, help="softmax temperature")
    parser.add_argument("--workers", type=int, help="worker pool size")
    parser.add_argument(
        "--dump-predictions",
        action="store_true",
        help="write per-sample predicted label maps",
    )
    return parser


def _load_toml(path: Path) -> dict:
    try:
        with open(path, "rb") as f:
            doc = tomli.load(f)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML ({exc})") from None
    unknown = set(doc) - set(_DEFAULTS) - {"manifest"}
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    return doc


def _build_run_config(args: argparse.Namespace) -> RunConfig:
    settings = dict(_DEFAULTS)
    settings["manifest"] = None
    if args.config is not None:
        settings.update(_load_toml(args.config))

    overrides = {
        "manifest": args.manifest,
        "out": args.out,
        "beta": args.beta,
        "gamma": args.gamma,
        "geo_stage": args.geo_stage,
        "w_max": args.w_max,
        "tau": args.tau,
        "temperature": args.temperature,
        "workers": args.workers,
    }
    settings.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_gmg:
        settings["enable_gmg"] = False
    if args.no_csa:
        settings["enable_csa"] = False
    if args.no_templates:
        settings["enable_templates"] = False
    if args.dump_predictions:
        settings["dump_predictions"] = True

    if settings["manifest"] is None:
        raise ConfigError("--manifest (or a manifest entry in --config) is required")

    try:
        return RunConfig(
            manifest_path=Path(settings["manifest"]),
            output_dir=Path(settings["out"]),
            gmg=GmgConfig(
                beta=float(settings["beta"]),
                gamma=float(settings["gamma"]),
                geo_stage=int(settings["geo_stage"]),
            ),
            fusion=FusionConfig(
                w_max=float(settings["w_max"]), tau=float(settings["tau"])
            ),
            enable_gmg=bool(settings["enable_gmg"]),
            enable_csa=bool(settings["enable_csa"]),
            enable_templates=bool(settings["enable_templates"]),
            temperature=float(settings["temperature"]),
            workers=int(settings["workers"]),
            dump_predictions=bool(settings["dump_predictions"]),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def main_bench(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = _bench_parser().parse_args(argv)
    try:
        config = _build_run_config(args)
    except ConfigError as exc:
        logger.error("%s", exc)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    try:
        report = run(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except AquasegError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA_ERROR
    print(
        f"aAcc={report.aacc:.4f} mIoU={report.miou:.4f} mAcc={report.macc:.4f} "
        f"({report.sample_count} samples) -> {config.output_dir}"
    )
    return EXIT_OK


def main_sentences(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(
        prog="aquaseg-sentences",
        description=(
            "Render reasoning records referenced by a manifest into the "
            "sentences the text-embedding extractor encodes."
        ),
    )
    parser.add_argument("--manifest", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True, help="sentences.json path")
    args = parser.parse_args(argv)
    try:
        manifest = tensor_store.load_manifest(args.manifest)
        sentences = {}
        for sample in manifest.samples:
            if sample.reasoning_path is None:
                continue
            record = tensor_store.load_reasoning(sample.reasoning_path)
            sentences[sample.sample_id] = csa.build_reasoning_sentence(record)
    except AquasegError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA_ERROR
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w") as f:
        json.dump({"version": 1, "sentences": sentences}, f, indent=1)
        f.write("\n")
    print(f"wrote {len(sentences)} sentences -> {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main_bench())
