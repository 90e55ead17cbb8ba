"""Benchmark orchestration: run the pipeline over a manifest, emit reports.

Category embeddings are built once per run; samples map to per-sample
confusion matrices on a worker pool and are reduced in manifest order, so
reports are bit-identical for any worker count. A single bad sample aborts
the whole run — silently skipping data would make the reported numbers
untrustworthy.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import csa, gmg, mask_classifier, metrics, tensor_store
from .errors import AquasegError, ConfigError
from .gmg import GmgConfig
from .csa import FusionConfig
from .metrics import ConfusionMatrix, MetricsReport
from .tensor_store import Manifest, SampleManifest

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    """Everything a benchmark run needs, ablation switches included.

    ``enable_templates=False`` classifies against the plain single-prompt
    embedding bank, which the manifest must then provide.
    """

    manifest_path: Path
    output_dir: Path
    gmg: GmgConfig = field(default_factory=GmgConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    enable_gmg: bool = True
    enable_csa: bool = True
    enable_templates: bool = True
    temperature: float = 0.01
    workers: int = 1
    dump_predictions: bool = False

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")


def _category_rows(manifest: Manifest, config: RunConfig) -> np.ndarray:
    """Unit category embeddings from the configured bank, computed once."""
    if config.enable_templates:
        bank_path = manifest.text_embeddings_path
    else:
        if manifest.plain_text_embeddings_path is None:
            raise ConfigError(
                "templates disabled but the manifest ships no plain embedding bank"
            )
        bank_path = manifest.plain_text_embeddings_path
    bank = tensor_store.load_tensor(bank_path, expected_rank=3)
    if bank.shape[0] != manifest.registry.num_categories:
        raise ConfigError(
            f"embedding bank covers {bank.shape[0]} categories, registry has "
            f"{manifest.registry.num_categories}"
        )
    return csa.average_templates(bank)


def _reasoning_embedding(sample: SampleManifest) -> np.ndarray | None:
    """Load the sample's reasoning embedding, degrading to None with a warning."""
    if sample.reasoning_embedding_path is None:
        if sample.reasoning_path is not None:
            logger.warning(
                "sample %s: reasoning record present but no embedding tensor; "
                "falling back to template-only rows",
                sample.sample_id,
            )
        return None
    try:
        embedding = tensor_store.load_tensor(
            sample.reasoning_embedding_path, expected_rank=2
        )
    except AquasegError as exc:
        logger.warning(
            "sample %s: unusable reasoning embedding (%s); falling back to "
            "template-only rows",
            sample.sample_id,
            exc,
        )
        return None
    return embedding


def _process_sample(
    sample: SampleManifest,
    template_rows: np.ndarray,
    num_categories: int,
    config: RunConfig,
) -> tuple[ConfusionMatrix, np.ndarray]:
    clip_features = tensor_store.load_tensor(sample.clip_features_path, 3)
    geo_features = tensor_store.load_tensor(
        sample.geo_path_for_stage(config.gmg.geo_stage), 3
    )

    if config.enable_gmg:
        corrected = gmg.gmg_forward(clip_features, geo_features, config.gmg)
    else:
        corrected = gmg.interpolate_features(clip_features, geo_features.shape[:2])

    rows = template_rows
    if config.enable_csa:
        embedding = _reasoning_embedding(sample)
        if embedding is not None:
            rows = csa.fuse(template_rows, embedding, config.fusion)

    logits = mask_classifier.mask_logits(rows, corrected)
    pred = mask_classifier.upsample_argmax(
        logits, (sample.image_height, sample.image_width)
    )
    gt = tensor_store.load_label_map(sample.gt_path, num_categories)
    cm = metrics.accumulate(ConfusionMatrix.zeros(num_categories), pred, gt)
    return cm, pred


def run(config: RunConfig) -> MetricsReport:
    """Execute a full benchmark run and write report files.

    Returns the computed report; ``metrics.json``, ``metrics.csv`` and
    ``per-class-iou.csv`` land in the configured output directory.
    """
    manifest = tensor_store.load_manifest(config.manifest_path)
    registry = manifest.registry
    template_rows = _category_rows(manifest, config)
    logger.info(
        "run: %d samples, %d categories, gmg=%s csa=%s templates=%s workers=%d",
        len(manifest.samples),
        registry.num_categories,
        config.enable_gmg,
        config.enable_csa,
        config.enable_templates,
        config.workers,
    )

    def work(sample: SampleManifest) -> tuple[ConfusionMatrix, np.ndarray]:
        try:
            return _process_sample(
                sample, template_rows, registry.num_categories, config
            )
        except AquasegError as exc:
            raise type(exc)(f"sample {sample.sample_id!r}: {exc}") from exc

    if config.workers == 1:
        results = [work(s) for s in manifest.samples]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(work, manifest.samples))

    total = ConfusionMatrix.zeros(registry.num_categories)
    for cm, _ in results:
        total = metrics.merge(total, cm)
    report = metrics.compute(total, registry, sample_count=len(manifest.samples))

    config.output_dir.mkdir(parents=True, exist_ok=True)
    if config.dump_predictions:
        pred_dir = config.output_dir / "predictions"
        pred_dir.mkdir(exist_ok=True)
        for sample, (_, pred) in zip(manifest.samples, results):
            tensor_store.write_tensor(pred_dir / f"{sample.sample_id}.npy", pred)
    emit_report(report, config.output_dir, registry)
    return report


def _grouped_columns(registry) -> list[tuple[str, str]]:
    return [
        (split, group)
        for split, groups in registry.splits.items()
        for group in groups
    ]


def emit_report(report: MetricsReport, output_dir: str | Path, registry) -> None:
    """Write metrics.json, metrics.csv and per-class-iou.csv.

    Key order is fixed and no timestamps are embedded, so re-running on
    unchanged inputs reproduces the files byte for byte. Grouped columns
    follow the registry's split definition order.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    doc = {
        "aAcc": report.aacc,
        "mIoU": report.miou,
        "mAcc": report.macc,
        "sample_count": report.sample_count,
        "grouped": {
            split: dict(groups) for split, groups in report.grouped.items()
        },
    }
    with open(output_dir / "metrics.json", "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")

    columns = ["aAcc", "mIoU", "mAcc"]
    values = [report.aacc, report.miou, report.macc]
    for split, group in _grouped_columns(registry):
        value = report.grouped.get(split, {}).get(group)
        columns.append(f"{split}/{group}")
        values.append("" if value is None else value)
    with open(output_dir / "metrics.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        writer.writerow(values)

    with open(output_dir / "per-class-iou.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["index", "name", "iou", "acc"])
        for i, name in enumerate(registry.names):
            writer.writerow(
                [
                    i,
                    name,
                    report.per_class_iou.get(i, ""),
                    report.per_class_acc.get(i, ""),
                ]
            )
