"""Frozen-encoder extraction producing the segmentation core's input tensors."""

from .extract import ExtractorJob, extract_geometric, extract_text, extract_visual
from .models import build_clip, build_geo

__version__ = "0.1.0"

__all__ = [
    "ExtractorJob",
    "build_clip",
    "build_geo",
    "extract_geometric",
    "extract_text",
    "extract_visual",
    "__version__",
]
