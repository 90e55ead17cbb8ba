"""Training-free open-vocabulary segmentation core for underwater imagery.

Consumes pre-extracted vision-language and geometric encoder features,
corrects the dense features with a geometric self-similarity attention
prior, fuses category text embeddings with per-image reasoning
embeddings, predicts per-pixel categories, and evaluates them with
confusion-matrix metrics including per-group mean IoU.
"""

from .bench_runner import RunConfig, run
from .csa import FusionConfig
from .errors import AquasegError
from .gmg import GmgConfig
from .metrics import ConfusionMatrix, MetricsReport
from .tensor_store import (
    IGNORE_LABEL,
    CategoryRegistry,
    Manifest,
    ReasoningRecord,
    SampleManifest,
)

__version__ = "0.1.0"

__all__ = [
    "AquasegError",
    "CategoryRegistry",
    "ConfusionMatrix",
    "FusionConfig",
    "GmgConfig",
    "IGNORE_LABEL",
    "Manifest",
    "MetricsReport",
    "ReasoningRecord",
    "RunConfig",
    "SampleManifest",
    "run",
    "__version__",
]
