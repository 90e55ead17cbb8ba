"""Category text-embedding construction and reasoning-guided fusion.

Per-category embeddings are the L2-normalized mean over a bank of
underwater prompt-template embeddings. When a per-image reasoning
embedding is available, categories whose cosine similarity to it clears a
threshold are pulled toward it with a clamped weight; everything else is
passed through untouched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import SchemaError, ShapeMismatchError, ZeroVectorError
from .tensor_store import ReasoningRecord

logger = logging.getLogger(__name__)

CLASS_SLOT = "{class}"

#: Sentence skeleton for encoding a reasoning record; the slots receive the
#: comma-joined object names and the comma-joined attribute words.
REASONING_SENTENCE = "A photo of {objects} that have attributes {attributes} underwater."


@dataclass(frozen=True)
class FusionConfig:
    """Clamp and gate controlling how far categories move toward reasoning."""

    w_max: float = 0.5
    tau: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        if self.w_max < 0.0:
            raise ValueError(f"w_max must be nonnegative, got {self.w_max}")


@dataclass(frozen=True)
class TemplateBank:
    """Ordered prompt templates, each with exactly one {class} slot."""

    templates: tuple[str, ...]
    groups: dict[str, tuple[int, ...]]

    def instantiate(self, category: str) -> list[str]:
        return [t.replace(CLASS_SLOT, category) for t in self.templates]


def load_templates(path: str | Path) -> TemplateBank:
    """Parse a templates.txt: one template per line, '#'-prefixed group headers."""
    templates: list[str] = []
    groups: dict[str, list[int]] = {}
    current: list[int] | None = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            name = line.lstrip("#").strip()
            if not name or name in groups:
                raise SchemaError(f"{path}:{lineno}: bad group header {line!r}")
            current = groups.setdefault(name, [])
            continue
        if line.count(CLASS_SLOT) != 1:
            raise SchemaError(
                f"{path}:{lineno}: template must contain {CLASS_SLOT} exactly once"
            )
        if current is None:
            raise SchemaError(f"{path}:{lineno}: template before any group header")
        current.append(len(templates))
        templates.append(line)
    if not templates:
        raise SchemaError(f"{path}: no templates found")
    return TemplateBank(
        templates=tuple(templates),
        groups={name: tuple(idx) for name, idx in groups.items()},
    )


def default_templates() -> TemplateBank:
    """The underwater template corpus shipped with the package."""
    path = resources.files("aquaseg.data").joinpath("templates.txt")
    with resources.as_file(path) as p:
        return load_templates(p)


def average_templates(bank: np.ndarray) -> np.ndarray:
    """Collapse a (T_cat, T_tmpl, C) embedding bank to unit category rows.

    Rows are the arithmetic mean over the template axis, L2-normalized.
    """
    if bank.ndim != 3:
        raise ShapeMismatchError(f"embedding bank must be rank 3, got {bank.shape}")
    mean = np.asarray(bank, dtype=np.float64).mean(axis=1)
    norms = np.linalg.norm(mean, axis=1)
    if (norms < 1e-12).any():
        row = int(np.argmin(norms))
        raise ZeroVectorError(f"category row {row}: template mean has ~zero norm")
    return mean / norms[:, None]


def build_reasoning_sentence(record: ReasoningRecord) -> str:
    """Render a reasoning record into the sentence handed to the text encoder.

    Objects are joined with ", "; attributes are the record-order
    concatenation of each object's attribute list, also comma-joined.
    Objects without attributes contribute nothing to the attribute slot.
    """
    objects = ", ".join(record.objects)
    attributes = ", ".join(
        attr for obj in record.objects for attr in record.attributes.get(obj, ())
    )
    return REASONING_SENTENCE.format(objects=objects, attributes=attributes)


def fuse(
    category_rows: np.ndarray, reasoning: np.ndarray, cfg: FusionConfig
) -> np.ndarray:
    """Pull gated category rows toward the normalized reasoning embedding.

    For each unit row t with cosine similarity s to the reasoning vector,
    the fusion weight is ``min(s, w_max)`` if ``s >= tau`` else 0; rows
    with weight 0 are returned bit-identical, the rest are re-normalized
    after adding ``w * reasoning``.
    """
    rows = np.asarray(category_rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ShapeMismatchError(f"category rows must be rank 2, got {rows.shape}")
    r = np.asarray(reasoning, dtype=np.float64).reshape(-1)
    if r.shape[0] != rows.shape[1]:
        raise ShapeMismatchError(
            f"reasoning has {r.shape[0]} channels, categories have {rows.shape[1]}"
        )
    r_norm = np.linalg.norm(r)
    if r_norm < 1e-12:
        raise ZeroVectorError("reasoning embedding has ~zero norm")
    r_unit = r / r_norm

    sims = rows @ r_unit
    weights = np.where(sims >= cfg.tau, np.minimum(sims, cfg.w_max), 0.0)
    out = rows.copy()
    active = weights != 0.0
    if active.any():
        mixed = rows[active] + weights[active, None] * r_unit[None, :]
        norms = np.linalg.norm(mixed, axis=1)
        if (norms < 1e-12).any():
            raise ZeroVectorError("fused row collapsed to ~zero norm")
        out[active] = mixed / norms[:, None]
    return out


def csa_forward(
    bank: np.ndarray,
    reasoning_embedding: np.ndarray | None,
    cfg: FusionConfig,
) -> np.ndarray:
    """Template averaging, then reasoning fusion when an embedding exists.

    Without a reasoning embedding the averaged rows pass through unchanged
    (the template-only ablation path).
    """
    rows = average_templates(bank)
    if reasoning_embedding is None:
        return rows
    return fuse(rows, reasoning_embedding, cfg)
