"""Loading and validation of the on-disk artifacts the math core consumes.

Everything the segmentation core reads or writes crosses this boundary:

* dense tensors (features, embedding banks, label maps) in the ``.npy``
  v1.0 container, restricted to little-endian float32 / uint16, C-order;
* ``manifest.json`` describing a benchmark run (samples + category registry);
* per-image reasoning records emitted by an MLLM.

The container header is parsed by a small bespoke reader instead of
``numpy.load`` so that malformed files fail with precise, path-carrying
errors and so the accepted dialect stays frozen.
"""

from __future__ import annotations

import ast
import json
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    GroupOverlapError,
    MalformedHeaderError,
    MissingFileError,
    NonFiniteValueError,
    RankMismatchError,
    SchemaError,
)

#: Ground-truth pixels carrying this value never participate in metrics.
IGNORE_LABEL = 255

_MAGIC = b"\x93NUMPY"
_VERSION = bytes([1, 0])
_HEADER_ALIGN = 64
_FLOAT_DESCR = "<f4"
_LABEL_DESCR = "<u2"
_SUPPORTED_DESCRS = (_FLOAT_DESCR, _LABEL_DESCR)

GEO_STAGE_PLACEHOLDER = "{stage}"


# ---------------------------------------------------------------------------
# .npy v1.0 container
# ---------------------------------------------------------------------------

def _parse_header(path: Path) -> tuple[dict, int]:
    """Return (header dict, data offset) for the container at *path*."""
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise MissingFileError(f"{path}: no such file") from None
    if len(raw) < 10 or raw[:6] != _MAGIC:
        raise MalformedHeaderError(f"{path}: not a tensor container (bad magic)")
    if raw[6:8] != _VERSION:
        raise MalformedHeaderError(
            f"{path}: unsupported container version {raw[6]}.{raw[7]}"
        )
    (header_len,) = struct.unpack("<H", raw[8:10])
    end = 10 + header_len
    if len(raw) < end:
        raise MalformedHeaderError(f"{path}: truncated header")
    header_text = raw[10:end].decode("latin1")
    if not header_text.endswith("\n"):
        raise MalformedHeaderError(f"{path}: header not newline-terminated")
    try:
        header = ast.literal_eval(header_text)
    except (ValueError, SyntaxError):
        raise MalformedHeaderError(f"{path}: unparseable header dict") from None
    if not isinstance(header, dict) or set(header) != {
        "descr",
        "fortran_order",
        "shape",
    }:
        raise MalformedHeaderError(f"{path}: header keys invalid")
    if header["descr"] not in _SUPPORTED_DESCRS:
        raise MalformedHeaderError(
            f"{path}: unsupported dtype descriptor {header['descr']!r}"
        )
    if header["fortran_order"] is not False:
        raise MalformedHeaderError(f"{path}: only C-order payloads are supported")
    shape = header["shape"]
    if (
        not isinstance(shape, tuple)
        or len(shape) == 0
        or not all(isinstance(d, int) and d >= 1 for d in shape)
    ):
        raise MalformedHeaderError(f"{path}: invalid shape {shape!r}")
    return header, end


def _read_npy(path: str | Path) -> tuple[np.ndarray, str]:
    """Read a container, returning (array in file dtype, descr string)."""
    path = Path(path)
    header, offset = _parse_header(path)
    raw = path.read_bytes()
    shape = header["shape"]
    dtype = np.dtype(header["descr"])
    expected = int(np.prod(shape)) * dtype.itemsize
    payload = raw[offset:]
    if len(payload) != expected:
        raise MalformedHeaderError(
            f"{path}: payload is {len(payload)} bytes, header promises {expected}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    return arr, header["descr"]


def peek_shape(path: str | Path) -> tuple[int, ...]:
    """Read only the container header and return the stored shape."""
    header, _ = _parse_header(Path(path))
    return header["shape"]


def load_tensor(path: str | Path, expected_rank: int) -> np.ndarray:
    """Load a float tensor, promote to float64, and validate it.

    Returns a read-only array with exactly *expected_rank* dimensions.
    """
    path = Path(path)
    arr, descr = _read_npy(path)
    if descr != _FLOAT_DESCR:
        raise MalformedHeaderError(
            f"{path}: expected a float32 payload, found {descr!r}"
        )
    if arr.ndim != expected_rank:
        raise RankMismatchError(
            f"{path}: rank {arr.ndim}, expected {expected_rank}"
        )
    out = arr.astype(np.float64)
    if not np.isfinite(out).all():
        raise NonFiniteValueError(f"{path}: tensor contains NaN or Inf")
    out.setflags(write=False)
    return out


def load_label_map(path: str | Path, num_categories: int | None = None) -> np.ndarray:
    """Load a rank-2 uint16 label map, optionally validated against K.

    Values must lie in ``[0, num_categories)`` or equal :data:`IGNORE_LABEL`.
    """
    path = Path(path)
    arr, descr = _read_npy(path)
    if descr != _LABEL_DESCR:
        raise MalformedHeaderError(
            f"{path}: expected a uint16 payload, found {descr!r}"
        )
    if arr.ndim != 2:
        raise RankMismatchError(f"{path}: rank {arr.ndim}, expected 2")
    if num_categories is not None:
        bad = (arr >= num_categories) & (arr != IGNORE_LABEL)
        if bad.any():
            value = int(arr[bad][0])
            raise SchemaError(
                f"{path}: label {value} outside [0, {num_categories}) and not IGNORE"
            )
    arr.setflags(write=False)
    return arr


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    """Write *array* as a canonical v1.0 container.

    Floating inputs are stored as little-endian float32, integer inputs as
    little-endian uint16. The header layout is byte-identical to the
    canonical writer of the wider ecosystem, so load/write round-trips
    preserve files exactly.
    """
    array = np.asarray(array)
    if array.ndim == 0:
        raise ValueError("rank-0 tensors are not supported")
    if np.issubdtype(array.dtype, np.floating):
        descr = _FLOAT_DESCR
        payload = np.ascontiguousarray(array, dtype="<f4")
    elif np.issubdtype(array.dtype, np.integer):
        if array.min() < 0 or array.max() > np.iinfo(np.uint16).max:
            raise ValueError("integer tensor does not fit in uint16")
        descr = _LABEL_DESCR
        payload = np.ascontiguousarray(array, dtype="<u2")
    else:
        raise ValueError(f"unsupported dtype {array.dtype}")
    header = (
        "{'descr': %r, 'fortran_order': False, 'shape': %r, }"
        % (descr, tuple(int(d) for d in array.shape))
    ).encode("latin1")
    hlen = len(header) + 1
    padlen = _HEADER_ALIGN - ((len(_MAGIC) + 2 + 2 + hlen) % _HEADER_ALIGN)
    blob = (
        _MAGIC
        + _VERSION
        + struct.pack("<H", hlen + padlen)
        + header
        + b" " * padlen
        + b"\n"
        + payload.tobytes()
    )
    Path(path).write_bytes(blob)


# ---------------------------------------------------------------------------
# Category registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CategoryRegistry:
    """Ordered category names plus named index partitions (splits)."""

    names: tuple[str, ...]
    splits: dict[str, dict[str, tuple[int, ...]]] = field(default_factory=dict)

    @property
    def num_categories(self) -> int:
        return len(self.names)

    def validate(self) -> None:
        if len(set(self.names)) != len(self.names):
            raise SchemaError("registry: category names are not unique")
        k = self.num_categories
        for split_name, groups in self.splits.items():
            seen: dict[int, str] = {}
            for group_name, indices in groups.items():
                for idx in indices:
                    if not 0 <= idx < k:
                        raise SchemaError(
                            f"registry: split {split_name!r} group {group_name!r} "
                            f"index {idx} outside [0, {k})"
                        )
                    if idx in seen:
                        raise GroupOverlapError(
                            f"registry: split {split_name!r} index {idx} is in "
                            f"both {seen[idx]!r} and {group_name!r}"
                        )
                    seen[idx] = group_name


def _registry_from_dict(doc: dict, origin: str) -> CategoryRegistry:
    try:
        names = tuple(str(n) for n in doc["categories"])
        splits = {
            str(split): {
                str(group): tuple(int(i) for i in indices)
                for group, indices in groups.items()
            }
            for split, groups in doc.get("splits", {}).items()
        }
    except (KeyError, TypeError, AttributeError) as exc:
        raise SchemaError(f"{origin}: malformed registry section ({exc})") from None
    registry = CategoryRegistry(names=names, splits=splits)
    registry.validate()
    return registry


def load_registry(path: str | Path) -> CategoryRegistry:
    """Load a standalone registry JSON (same layout as a manifest, no samples)."""
    doc = _load_json(Path(path))
    _check_version(doc, str(path))
    return _registry_from_dict(doc, str(path))


def aquaov255_registry() -> CategoryRegistry:
    """The 255-category underwater registry shipped with the package."""
    with resources.files("aquaseg.data").joinpath("aquaov255.json").open("rb") as f:
        doc = json.load(f)
    return _registry_from_dict(doc, "aquaov255.json")


# ---------------------------------------------------------------------------
# Reasoning records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReasoningRecord:
    """Per-image MLLM output: caption, detected objects, object attributes."""

    caption: str
    objects: tuple[str, ...]
    attributes: dict[str, tuple[str, ...]]


def load_reasoning(path: str | Path) -> ReasoningRecord:
    """Load a reasoning record JSON with keys Caption / Objects / Attributes.

    Object names are deliberately not checked against any registry: the
    MLLM may name things outside the category list and fusion tolerates it.
    """
    path = Path(path)
    doc = _load_json(path)
    if not isinstance(doc, dict) or not {"Caption", "Objects", "Attributes"} <= set(
        doc
    ):
        raise SchemaError(f"{path}: missing Caption/Objects/Attributes keys")
    caption = doc["Caption"]
    objects = doc["Objects"]
    attributes = doc["Attributes"]
    if (
        not isinstance(caption, str)
        or not isinstance(objects, list)
        or not all(isinstance(o, str) for o in objects)
        or not isinstance(attributes, dict)
    ):
        raise SchemaError(f"{path}: malformed record field types")
    for obj, attrs in attributes.items():
        if obj not in objects:
            raise SchemaError(
                f"{path}: attribute key {obj!r} does not appear in Objects"
            )
        if not isinstance(attrs, list) or not all(isinstance(a, str) for a in attrs):
            raise SchemaError(f"{path}: attributes of {obj!r} must be strings")
    return ReasoningRecord(
        caption=caption,
        objects=tuple(objects),
        attributes={o: tuple(a) for o, a in attributes.items()},
    )


# ---------------------------------------------------------------------------
# Sample manifests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleManifest:
    """One benchmark image: feature tensors, ground truth, optional reasoning."""

    sample_id: str
    image_height: int
    image_width: int
    clip_features_path: Path
    geo_features_path: Path
    gt_path: Path
    reasoning_path: Path | None = None
    reasoning_embedding_path: Path | None = None

    def geo_path_for_stage(self, stage: int) -> Path:
        """Resolve the geometric tensor path for an encoder stage.

        Manifests may embed a ``{stage}`` placeholder so one entry covers
        all exported stages; without it the path is used as-is.
        """
        text = str(self.geo_features_path)
        if GEO_STAGE_PLACEHOLDER in text:
            return Path(text.replace(GEO_STAGE_PLACEHOLDER, str(stage)))
        return self.geo_features_path


@dataclass(frozen=True)
class Manifest:
    """A parsed manifest.json: registry, embedding banks, and samples."""

    registry: CategoryRegistry
    samples: tuple[SampleManifest, ...]
    text_embeddings_path: Path
    plain_text_embeddings_path: Path | None = None


def _load_json(path: Path):
    try:
        with open(path, "rb") as f:
            return json.load(f)
    except FileNotFoundError:
        raise MissingFileError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None


def _check_version(doc, origin: str) -> None:
    if not isinstance(doc, dict) or doc.get("version") != 1:
        raise SchemaError(f"{origin}: schema version missing or unsupported")


def _require_file(path: Path, origin: str, role: str) -> None:
    if not path.is_file():
        raise MissingFileError(f"{origin}: {role} {path} does not exist")


def _geo_stage_paths(path: Path) -> list[Path]:
    text = str(path)
    if GEO_STAGE_PLACEHOLDER in text:
        return [Path(text.replace(GEO_STAGE_PLACEHOLDER, str(s))) for s in range(4)]
    return [path]


def load_manifest(path: str | Path) -> Manifest:
    """Load and validate a benchmark manifest.

    Every referenced tensor must exist with a well-formed header, and each
    ground-truth label map must match its sample's declared image size.
    Relative paths are resolved against the manifest's directory.
    """
    path = Path(path)
    doc = _load_json(path)
    _check_version(doc, str(path))
    registry = _registry_from_dict(doc, str(path))
    base = path.parent

    def resolve(p) -> Path:
        p = Path(str(p))
        return p if p.is_absolute() else base / p

    if "text_embeddings_path" not in doc:
        raise SchemaError(f"{path}: text_embeddings_path missing")
    bank_path = resolve(doc["text_embeddings_path"])
    _require_file(bank_path, str(path), "text embedding bank")
    plain_path = None
    if doc.get("plain_text_embeddings_path") is not None:
        plain_path = resolve(doc["plain_text_embeddings_path"])
        _require_file(plain_path, str(path), "plain text embedding bank")

    samples = []
    for i, entry in enumerate(doc.get("samples", [])):
        try:
            sample = SampleManifest(
                sample_id=str(entry["sample_id"]),
                image_height=int(entry["image_height"]),
                image_width=int(entry["image_width"]),
                clip_features_path=resolve(entry["clip_features_path"]),
                geo_features_path=resolve(entry["geo_features_path"]),
                gt_path=resolve(entry["gt_path"]),
                reasoning_path=(
                    resolve(entry["reasoning_path"])
                    if entry.get("reasoning_path") is not None
                    else None
                ),
                reasoning_embedding_path=(
                    resolve(entry["reasoning_embedding_path"])
                    if entry.get("reasoning_embedding_path") is not None
                    else None
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: sample #{i} malformed ({exc})") from None
        _validate_sample(sample, str(path), registry)
        samples.append(sample)

    return Manifest(
        registry=registry,
        samples=tuple(samples),
        text_embeddings_path=bank_path,
        plain_text_embeddings_path=plain_path,
    )


def _validate_sample(sample: SampleManifest, origin: str, registry: CategoryRegistry) -> None:
    origin = f"{origin}: sample {sample.sample_id!r}"
    _require_file(sample.clip_features_path, origin, "clip features")
    if len(peek_shape(sample.clip_features_path)) != 3:
        raise SchemaError(f"{origin}: clip features must be rank 3")
    for geo in _geo_stage_paths(sample.geo_features_path):
        _require_file(geo, origin, "geometric features")
        if len(peek_shape(geo)) != 3:
            raise SchemaError(f"{origin}: geometric features must be rank 3")
    _require_file(sample.gt_path, origin, "ground truth")
    gt_shape = peek_shape(sample.gt_path)
    if gt_shape != (sample.image_height, sample.image_width):
        raise SchemaError(
            f"{origin}: ground truth shape {gt_shape} != declared image size "
            f"({sample.image_height}, {sample.image_width})"
        )
    if sample.reasoning_path is not None:
        _require_file(sample.reasoning_path, origin, "reasoning record")
    if sample.reasoning_embedding_path is not None:
        _require_file(sample.reasoning_embedding_path, origin, "reasoning embedding")
