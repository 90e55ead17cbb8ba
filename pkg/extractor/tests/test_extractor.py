"""Extractor contract tests.

Models are built once per session from seeded random initializations (no
checkpoints in CI), so these tests pin shapes, dtypes, container validity,
and determinism — not embedding semantics. Emitted tensors are validated
by loading them back through the segmentation core's tensor store, which
is the consuming side of the interface.
"""

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from aquaseg.tensor_store import load_tensor
from aquaseg_extractor import models
from aquaseg_extractor.extract import (
    ExtractorJob,
    extract_geometric,
    extract_text,
    extract_visual,
    read_categories,
    read_templates,
    write_metadata,
)
from importlib import resources

CATEGORIES = ["background", "coral", "zebrafish"]


@pytest.fixture(scope="session")
def clip_bundle():
    return models.build_clip("b16", checkpoint=None, seed=0)


@pytest.fixture(scope="session")
def geo_model():
    model, _ = models.build_geo(checkpoint=None, seed=0)
    return model


@pytest.fixture(scope="session")
def tiny_image(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("images") / "tiny.png"
    gradient = (np.indices((24, 32)).sum(axis=0) * 4 % 256).astype(np.uint8)
    rgb = np.stack([gradient, np.flipud(gradient), 255 - gradient], axis=-1)
    Image.fromarray(rgb).save(path)
    return path


@pytest.fixture(scope="session")
def gray_image(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("images") / "gray.png"
    Image.fromarray(
        (np.linspace(0, 255, 20 * 30).reshape(20, 30)).astype(np.uint8), mode="L"
    ).save(path)
    return path


@pytest.fixture(scope="session")
def shipped_templates(tmp_path_factory) -> Path:
    data = resources.files("aquaseg.data").joinpath("templates.txt").read_text()
    path = tmp_path_factory.mktemp("templates") / "templates.txt"
    path.write_text(data)
    return path


@pytest.fixture(scope="session")
def visual_out(tmp_path_factory, clip_bundle, tiny_image):
    job = ExtractorJob(
        output_dir=tmp_path_factory.mktemp("visual"), image_paths=[tiny_image]
    )
    (path,) = extract_visual(job, clip_bundle)
    return path


@pytest.fixture(scope="session")
def text_out(tmp_path_factory, clip_bundle, shipped_templates):
    out_dir = tmp_path_factory.mktemp("text")
    sentences = out_dir / "sentences.json"
    sentences.write_text(
        json.dumps(
            {
                "version": 1,
                "sentences": {
                    "s0": "A photo of zebrafish that have attributes silver, "
                    "striped, small underwater."
                },
            }
        )
    )
    job = ExtractorJob(
        output_dir=out_dir,
        categories=CATEGORIES,
        template_bank_path=shipped_templates,
        sentences_path=sentences,
    )
    return extract_text(job, clip_bundle)


class TestVisual:
    def test_b16_patch_grid_contract(self, visual_out):
        raw = np.load(visual_out)
        assert raw.shape == (14, 14, 512)
        assert raw.dtype == np.float32

    def test_passes_core_validation(self, visual_out):
        grid = load_tensor(visual_out, expected_rank=3)
        assert grid.shape == (14, 14, 512)
        assert np.isfinite(grid).all()

    def test_reextraction_is_deterministic(
        self, tmp_path, clip_bundle, tiny_image, visual_out
    ):
        job = ExtractorJob(output_dir=tmp_path, image_paths=[tiny_image])
        (again,) = extract_visual(job, clip_bundle)
        assert again.read_bytes() == visual_out.read_bytes()

    def test_grayscale_is_replicated_to_rgb(self, tmp_path, clip_bundle, gray_image):
        job = ExtractorJob(output_dir=tmp_path, image_paths=[gray_image])
        (path,) = extract_visual(job, clip_bundle)
        assert load_tensor(path, expected_rank=3).shape == (14, 14, 512)


class TestGeometric:
    def test_four_stages_with_sane_shapes(self, tmp_path, geo_model, tiny_image):
        job = ExtractorJob(output_dir=tmp_path, image_paths=[tiny_image])
        written = extract_geometric(job, geo_model)
        assert len(written) == 4
        shapes = [load_tensor(p, expected_rank=3).shape for p in sorted(written)]
        for earlier, later in zip(shapes, shapes[1:]):
            # stages may only hold or coarsen spatial resolution
            assert later[0] <= earlier[0] and later[1] <= earlier[1]
            assert later[2] == earlier[2]

    def test_stage_files_are_distinct(self, tmp_path, geo_model, tiny_image):
        job = ExtractorJob(output_dir=tmp_path, image_paths=[tiny_image])
        written = extract_geometric(job, geo_model)
        blobs = {p.read_bytes() for p in written}
        assert len(blobs) == 4


class TestText:
    def test_bank_shape_and_channel_match(self, text_out, visual_out):
        bank = load_tensor(text_out["text_bank"], expected_rank=3)
        assert bank.shape == (3, 100, 512)
        visual = load_tensor(visual_out, expected_rank=3)
        assert bank.shape[2] == visual.shape[2]

    def test_plain_bank_single_template(self, text_out):
        plain = load_tensor(text_out["plain_bank"], expected_rank=3)
        assert plain.shape == (3, 1, 512)

    def test_reasoning_embedding_contract(self, text_out):
        reasoning = load_tensor(text_out["reasoning:s0"], expected_rank=2)
        assert reasoning.shape == (1, 512)

    def test_identical_sentences_embed_identically(self, clip_bundle):
        sentence = "A photo of a koi underwater."
        first = models.encode_sentences(clip_bundle, [sentence]).numpy()
        second = models.encode_sentences(clip_bundle, [sentence]).numpy()
        np.testing.assert_array_equal(first, second)

    def test_empty_category_list_rejected(self, tmp_path, clip_bundle):
        job = ExtractorJob(output_dir=tmp_path, categories=[])
        with pytest.raises(ValueError, match="category list"):
            extract_text(job, clip_bundle)

    def test_overlong_sentence_truncates_with_warning(self, clip_bundle, caplog):
        words = " ".join(["barnacle"] * 120)
        with caplog.at_level("WARNING"):
            out = models.encode_sentences(clip_bundle, [words])
        assert out.shape == (1, 512)
        assert any("truncated" in message for message in caplog.messages)


class TestInputsAndMetadata:
    def test_read_categories_txt_and_json(self, tmp_path):
        txt = tmp_path / "cats.txt"
        txt.write_text("background\ncoral\n\nzebrafish\n")
        assert read_categories(txt) == CATEGORIES
        registry = tmp_path / "registry.json"
        registry.write_text(json.dumps({"version": 1, "categories": CATEGORIES}))
        assert read_categories(registry) == CATEGORIES

    def test_read_templates_requires_slot(self, tmp_path):
        bad = tmp_path / "t.txt"
        bad.write_text("# group\nno slot here\n")
        with pytest.raises(ValueError):
            read_templates(bad)

    def test_metadata_sidecar(self, tmp_path, clip_bundle):
        job = ExtractorJob(output_dir=tmp_path)
        path = write_metadata(job, clip_bundle, geo_source="seeded-random:1")
        meta = json.loads(path.read_text())
        assert meta["version"] == 1
        assert meta["flattening"] == "row-major"
        assert meta["vision_language"]["projection_dim"] == 512
        assert "preprocessing" in meta
