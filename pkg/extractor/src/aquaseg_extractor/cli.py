"""``aquaseg-extract``: produce the tensor artifacts the benchmark consumes."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import extract, mllm, models
from .extract import ExtractorJob

logger = logging.getLogger(__name__)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aquaseg-extract",
        description=(
            "Run frozen encoders over images, templates, and reasoning "
            "sentences, writing .npy tensors plus a metadata sidecar."
        ),
    )
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--images", type=Path, nargs="*", default=[])
    parser.add_argument(
        "--clip-scale", choices=sorted(models.CLIP_PRESETS), default="b16"
    )
    parser.add_argument(
        "--clip-checkpoint", help="local vision-language checkpoint directory"
    )
    parser.add_argument(
        "--geo-checkpoint", help="local geometric backbone checkpoint directory"
    )
    parser.add_argument(
        "--categories", type=Path, help="category list (.txt lines or registry .json)"
    )
    parser.add_argument("--templates", type=Path, help="templates.txt path")
    parser.add_argument(
        "--sentences", type=Path, help="sentences.json from aquaseg-sentences"
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--skip-visual", action="store_true")
    parser.add_argument("--skip-geometric", action="store_true")
    parser.add_argument("--skip-text", action="store_true")
    parser.add_argument(
        "--mllm-endpoint", help="OpenAI-compatible chat endpoint for reasoning records"
    )
    parser.add_argument("--mllm-model", default="gpt-4o")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=getattr(
            logging, os.environ.get("AQUASEG_LOG", "INFO").upper(), logging.INFO
        ),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = _parser().parse_args(argv)

    job = ExtractorJob(
        output_dir=args.out,
        image_paths=list(args.images),
        clip_scale=args.clip_scale,
        clip_checkpoint=args.clip_checkpoint,
        geo_checkpoint=args.geo_checkpoint,
        categories=extract.read_categories(args.categories) if args.categories else [],
        template_bank_path=args.templates,
        sentences_path=args.sentences,
        seed=args.seed,
    )

    want_visual = job.image_paths and not args.skip_visual
    want_text = (job.categories or args.sentences) and not args.skip_text
    bundle = None
    if want_visual or want_text:
        bundle = models.build_clip(job.clip_scale, job.clip_checkpoint, job.seed)

    geo_source = None
    if job.image_paths and not args.skip_geometric:
        geo_model, geo_source = models.build_geo(job.geo_checkpoint, job.seed)
        extract.extract_geometric(job, geo_model)

    if want_visual:
        extract.extract_visual(job, bundle)
    if want_text:
        try:
            extract.extract_text(job, bundle)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1

    if args.mllm_endpoint and job.image_paths:
        mllm.generate_records(
            job.image_paths,
            job.categories,
            args.mllm_endpoint,
            args.mllm_model,
            args.out / "reasoning",
        )

    extract.write_metadata(job, bundle, geo_source)
    print(f"extraction complete -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
