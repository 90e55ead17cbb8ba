"""Extraction jobs: turn images, templates, and sentences into tensors.

Output files use the same little-endian float32 .npy v1.0 container the
segmentation core validates, with row-major position flattening. The exact
preprocessing is recorded in a sidecar ``extraction_meta.json`` so every
output directory is self-describing.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import models
from .models import ClipBundle

logger = logging.getLogger(__name__)

CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

PLAIN_TEMPLATE = "a photo of a {class}."
CLASS_SLOT = "{class}"

TEXT_BATCH = 64


@dataclass
class ExtractorJob:
    """One extraction request: images, model choices, and output location."""

    output_dir: Path
    image_paths: list[Path] = field(default_factory=list)
    clip_scale: str = "b16"
    clip_checkpoint: str | None = None
    geo_checkpoint: str | None = None
    categories: list[str] = field(default_factory=list)
    template_bank_path: Path | None = None
    sentences_path: Path | None = None
    seed: int = 0

    @property
    def tensor_dir(self) -> Path:
        return self.output_dir / "tensors"


def load_image(path: Path) -> Image.Image:
    """Decode an image, replicating grayscale to three channels."""
    with Image.open(path) as img:
        return img.convert("RGB")


def to_model_tensor(img: Image.Image, size: int, mean, std) -> torch.Tensor:
    resized = img.resize((size, size), Image.BICUBIC)
    arr = np.asarray(resized, dtype=np.float32) / 255.0
    arr = (arr - np.asarray(mean, dtype=np.float32)) / np.asarray(std, dtype=np.float32)
    return torch.from_numpy(arr).permute(2, 0, 1)


def read_templates(path: Path) -> list[str]:
    """Template lines from a templates.txt ('#' lines are group headers)."""
    templates = []
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if CLASS_SLOT not in line:
            raise ValueError(f"{path}: template without {CLASS_SLOT} slot: {line!r}")
        templates.append(line)
    if not templates:
        raise ValueError(f"{path}: no templates found")
    return templates


def read_categories(path: Path) -> list[str]:
    """Category names from a plain list or a registry/manifest JSON."""
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        names = doc["categories"]
    else:
        names = [line.strip() for line in path.read_text().splitlines() if line.strip()]
    if not names:
        raise ValueError(f"{path}: empty category list")
    return [str(n) for n in names]


def read_sentences(path: Path) -> dict[str, str]:
    doc = json.loads(path.read_text())
    if doc.get("version") != 1 or "sentences" not in doc:
        raise ValueError(f"{path}: not a version-1 sentence manifest")
    return {str(k): str(v) for k, v in doc["sentences"].items()}


def extract_visual(job: ExtractorJob, bundle: ClipBundle) -> list[Path]:
    """Per-image joint-space patch grids, written as ``<stem>_clip.npy``."""
    job.tensor_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for path in job.image_paths:
        pixels = to_model_tensor(
            load_image(path), bundle.image_size, CLIP_MEAN, CLIP_STD
        )
        grid = models.encode_patch_grid(bundle, pixels).numpy().astype(np.float32)
        out = job.tensor_dir / f"{path.stem}_clip.npy"
        np.save(out, grid)
        logger.info("visual %s -> %s %s", path.name, out.name, grid.shape)
        written.append(out)
    return written


def extract_geometric(job: ExtractorJob, geo_model) -> list[Path]:
    """All four stage grids per image: ``<stem>_geo_stage{0..3}.npy``."""
    job.tensor_dir.mkdir(parents=True, exist_ok=True)
    size = geo_model.config.image_size
    written = []
    for path in job.image_paths:
        pixels = to_model_tensor(load_image(path), size, IMAGENET_MEAN, IMAGENET_STD)
        stages = models.encode_geo_stages(geo_model, pixels)
        for stage, grid in enumerate(stages):
            out = job.tensor_dir / f"{path.stem}_geo_stage{stage}.npy"
            np.save(out, grid.numpy().astype(np.float32))
            written.append(out)
        logger.info("geometric %s -> 4 stages %s", path.name, stages[-1].shape)
    return written


def _encode_batched(bundle: ClipBundle, sentences: list[str]) -> np.ndarray:
    chunks = []
    for start in range(0, len(sentences), TEXT_BATCH):
        chunk = sentences[start : start + TEXT_BATCH]
        chunks.append(models.encode_sentences(bundle, chunk).numpy())
    return np.concatenate(chunks, axis=0).astype(np.float32)


def extract_text(job: ExtractorJob, bundle: ClipBundle) -> dict[str, Path]:
    """Template embedding banks and per-sample reasoning embeddings.

    Writes ``text_bank.npy`` (T_cat, T_tmpl, C), ``plain_bank.npy``
    (T_cat, 1, C), and one ``<sample_id>_reasoning.npy`` (1, C) per entry
    of the sentence manifest. Everything is stored unnormalized; the core
    normalizes.
    """
    if not job.categories:
        raise ValueError("text extraction requires a non-empty category list")
    job.tensor_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    if job.template_bank_path is not None:
        templates = read_templates(job.template_bank_path)
        sentences = [
            t.replace(CLASS_SLOT, name) for name in job.categories for t in templates
        ]
        flat = _encode_batched(bundle, sentences)
        bank = flat.reshape(len(job.categories), len(templates), -1)
        out = job.tensor_dir / "text_bank.npy"
        np.save(out, bank)
        written["text_bank"] = out
        logger.info("text bank %s", bank.shape)

    plain = _encode_batched(
        bundle,
        [PLAIN_TEMPLATE.replace(CLASS_SLOT, name) for name in job.categories],
    ).reshape(len(job.categories), 1, -1)
    out = job.tensor_dir / "plain_bank.npy"
    np.save(out, plain)
    written["plain_bank"] = out

    if job.sentences_path is not None:
        for sample_id, sentence in read_sentences(job.sentences_path).items():
            embedding = _encode_batched(bundle, [sentence]).reshape(1, -1)
            out = job.tensor_dir / f"{sample_id}_reasoning.npy"
            np.save(out, embedding)
            written[f"reasoning:{sample_id}"] = out
    return written


def write_metadata(job: ExtractorJob, bundle: ClipBundle | None, geo_source: str | None) -> Path:
    """Sidecar describing exactly how the tensors in this directory were made."""
    geo_depth = None
    meta = {
        "version": 1,
        "flattening": "row-major",
        "preprocessing": {
            "resize": "square bicubic to model input size",
            "grayscale": "converted to RGB",
            "clip_normalize": {"mean": CLIP_MEAN, "std": CLIP_STD},
            "geo_normalize": {"mean": IMAGENET_MEAN, "std": IMAGENET_STD},
        },
        "seed": job.seed,
    }
    if bundle is not None:
        meta["vision_language"] = {
            "scale": bundle.scale,
            "source": bundle.source,
            "projection_dim": bundle.projection_dim,
            "patch_size": bundle.patch_size,
            "input_size": bundle.image_size,
            "token_policy": "states entering the final block, final norm + projection, class token dropped",
        }
    if geo_source is not None:
        meta["geometric"] = {
            "source": geo_source,
            "stage_policy": "hidden states at depth/4, depth/2, 3*depth/4, depth",
        }
    job.output_dir.mkdir(parents=True, exist_ok=True)
    out = job.output_dir / "extraction_meta.json"
    with open(out, "w") as f:
        json.dump(meta, f, indent=1)
        f.write("\n")
    return out
