"""Frozen encoder construction: vision-language towers and geometric backbone.

Models are built from published checkpoint directories when available.
Without a checkpoint, the same architectures are instantiated with a
seeded random initialization so the extraction pipeline stays runnable
and deterministic end to end; the resulting embeddings are structurally
valid (shapes, dtypes, finiteness) but carry no semantics, which is
exactly what contract tests need.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import torch
from transformers import (
    CLIPConfig,
    CLIPModel,
    CLIPTextConfig,
    CLIPVisionConfig,
    ViTConfig,
    ViTModel,
)

logger = logging.getLogger(__name__)

CONTEXT_LENGTH = 77
VOCAB_SIZE = 49408
BOS_ID = VOCAB_SIZE - 2
EOS_ID = VOCAB_SIZE - 1

CLIP_PRESETS = {
    "b16": dict(
        vision=dict(hidden_size=768, num_hidden_layers=12, num_attention_heads=12,
                    intermediate_size=3072, patch_size=16, image_size=224),
        text=dict(hidden_size=512, num_hidden_layers=12, num_attention_heads=8,
                  intermediate_size=2048),
        projection_dim=512,
    ),
    "l14": dict(
        vision=dict(hidden_size=1024, num_hidden_layers=24, num_attention_heads=16,
                    intermediate_size=4096, patch_size=14, image_size=224),
        text=dict(hidden_size=768, num_hidden_layers=12, num_attention_heads=12,
                  intermediate_size=3072),
        projection_dim=768,
    ),
    "h14": dict(
        vision=dict(hidden_size=1280, num_hidden_layers=32, num_attention_heads=16,
                    intermediate_size=5120, patch_size=14, image_size=224),
        text=dict(hidden_size=1024, num_hidden_layers=24, num_attention_heads=16,
                  intermediate_size=4096),
        projection_dim=1024,
    ),
}

GEO_CONFIG = dict(
    hidden_size=384,
    num_hidden_layers=12,
    num_attention_heads=6,
    intermediate_size=1536,
    patch_size=8,
    image_size=224,
)


@dataclass
class ClipBundle:
    model: CLIPModel
    tokenizer: "object | None"  # HF tokenizer when a checkpoint provides one
    scale: str
    source: str

    @property
    def projection_dim(self) -> int:
        return self.model.config.projection_dim

    @property
    def patch_size(self) -> int:
        return self.model.config.vision_config.patch_size

    @property
    def image_size(self) -> int:
        return self.model.config.vision_config.image_size


def build_clip(scale: str, checkpoint: str | None, seed: int) -> ClipBundle:
    if checkpoint is not None:
        logger.info("loading vision-language checkpoint from %s", checkpoint)
        model = CLIPModel.from_pretrained(checkpoint)
        tokenizer = _load_tokenizer(checkpoint)
        source = checkpoint
    else:
        if scale not in CLIP_PRESETS:
            raise ValueError(f"unknown scale {scale!r}, expected {list(CLIP_PRESETS)}")
        preset = CLIP_PRESETS[scale]
        logger.warning(
            "no vision-language checkpoint given: initializing %s architecture "
            "with seed %d (embeddings will not be semantic)", scale, seed,
        )
        torch.manual_seed(seed)
        config = CLIPConfig(
            text_config=CLIPTextConfig(
                vocab_size=VOCAB_SIZE,
                max_position_embeddings=CONTEXT_LENGTH,
                **preset["text"],
            ),
            vision_config=CLIPVisionConfig(**preset["vision"]),
            projection_dim=preset["projection_dim"],
        )
        model = CLIPModel(config)
        tokenizer = None
        source = f"seeded-random:{seed}"
    model.eval()
    for param in model.parameters():
        param.requires_grad_(False)
    return ClipBundle(model=model, tokenizer=tokenizer, scale=scale, source=source)


def _load_tokenizer(checkpoint: str):
    try:
        from transformers import AutoTokenizer

        return AutoTokenizer.from_pretrained(checkpoint)
    except Exception as exc:  # pragma: no cover - depends on checkpoint contents
        logger.warning(
            "checkpoint %s ships no usable tokenizer (%s); falling back to the "
            "hashing tokenizer", checkpoint, exc,
        )
        return None


def build_geo(checkpoint: str | None, seed: int) -> tuple[ViTModel, str]:
    if checkpoint is not None:
        logger.info("loading geometric backbone from %s", checkpoint)
        model = ViTModel.from_pretrained(checkpoint)
        source = checkpoint
    else:
        logger.warning(
            "no geometric checkpoint given: initializing ViT-S/8 architecture "
            "with seed %d", seed,
        )
        torch.manual_seed(seed + 1)
        model = ViTModel(ViTConfig(**GEO_CONFIG), add_pooling_layer=False)
        source = f"seeded-random:{seed + 1}"
    model.eval()
    for param in model.parameters():
        param.requires_grad_(False)
    return model, source


def hash_tokenize(sentences: list[str]) -> tuple[torch.Tensor, list[int], int]:
    """Deterministic fallback tokenizer: words hash into the vocabulary.

    Returns (ids [N, context], eos positions, number of truncated sentences).
    Only used when no checkpoint tokenizer exists; with random weights the
    ids just need to be stable and in-range.
    """
    batch = torch.zeros(len(sentences), CONTEXT_LENGTH, dtype=torch.long)
    eos_positions = []
    truncated = 0
    for row, sentence in enumerate(sentences):
        words = sentence.lower().split()
        limit = CONTEXT_LENGTH - 2
        if len(words) > limit:
            words = words[:limit]
            truncated += 1
        ids = [BOS_ID]
        for word in words:
            digest = hashlib.sha256(word.encode("utf-8")).digest()
            ids.append(int.from_bytes(digest[:4], "little") % (VOCAB_SIZE - 2))
        ids.append(EOS_ID)
        batch[row, : len(ids)] = torch.tensor(ids, dtype=torch.long)
        eos_positions.append(len(ids) - 1)
    return batch, eos_positions, truncated


def checkpoint_tokenize(tokenizer, sentences: list[str]):
    """Tokenize with a checkpoint tokenizer, truncating at the context limit."""
    encoded = tokenizer(
        sentences,
        padding="max_length",
        max_length=CONTEXT_LENGTH,
        truncation=True,
        return_tensors="pt",
    )
    ids = encoded["input_ids"]
    eos_id = tokenizer.eos_token_id
    eos_positions = [int(torch.nonzero(row == eos_id)[0]) for row in ids]
    return ids, eos_positions


@torch.no_grad()
def encode_patch_grid(bundle: ClipBundle, pixels: torch.Tensor) -> torch.Tensor:
    """Patch-token grid in the joint space: (H_p, W_p, projection_dim).

    Token states entering the final transformer block are taken, the final
    layer norm and the joint-space projection are applied, and the class
    token is dropped.
    """
    vision = bundle.model.vision_model
    out = vision(pixel_values=pixels.unsqueeze(0), output_hidden_states=True)
    tokens = out.hidden_states[-2]
    tokens = vision.post_layernorm(tokens)
    projected = bundle.model.visual_projection(tokens[:, 1:, :])
    side = bundle.image_size // bundle.patch_size
    return projected.reshape(side, side, bundle.projection_dim)


@torch.no_grad()
def encode_sentences(bundle: ClipBundle, sentences: list[str]) -> torch.Tensor:
    """Sentence embeddings in the joint space: (N, projection_dim), unnormalized."""
    if bundle.tokenizer is not None:
        ids, eos_positions = checkpoint_tokenize(bundle.tokenizer, sentences)
    else:
        ids, eos_positions, truncated = hash_tokenize(sentences)
        if truncated:
            logger.warning(
                "%d sentence(s) exceeded the %d-token context and were truncated",
                truncated, CONTEXT_LENGTH,
            )
    out = bundle.model.text_model(input_ids=ids)
    rows = torch.arange(len(sentences))
    pooled = out.last_hidden_state[rows, torch.tensor(eos_positions)]
    return bundle.model.text_projection(pooled)


@torch.no_grad()
def encode_geo_stages(model: ViTModel, pixels: torch.Tensor) -> list[torch.Tensor]:
    """Four stage grids (H_g, W_g, C_g), tapped at evenly spaced depths."""
    out = model(pixel_values=pixels.unsqueeze(0), output_hidden_states=True)
    depth = model.config.num_hidden_layers
    taps = [depth // 4, depth // 2, 3 * depth // 4, depth]
    side = model.config.image_size // model.config.patch_size
    stages = []
    for layer in taps:
        tokens = out.hidden_states[layer][:, 1:, :]
        stages.append(tokens.reshape(side, side, model.config.hidden_size))
    return stages
