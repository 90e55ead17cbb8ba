"""Optional MLLM reasoning-record generation against a chat endpoint.

Records are cached to JSON next to the tensors and never regenerated once
present, so the expensive model is hit at most once per image. Offline
use is the norm: the segmentation benchmark runs entirely from cached
records, and its repository ships fixture records for its test suite.
"""

from __future__ import annotations

import base64
import json
import logging
import os
from pathlib import Path

import requests

logger = logging.getLogger(__name__)

PROMPT = (
    "You are labeling an underwater photograph. Reply with a single JSON "
    "object and nothing else, using exactly these keys: \"Caption\" (one "
    "concise sentence), \"Objects\" (a list of object names drawn from the "
    "provided category list), and \"Attributes\" (an object mapping each "
    "entry of Objects to a list of short attribute strings such as color, "
    "shape, or size). Category list: {categories}"
)


def generate_records(
    image_paths: list[Path],
    categories: list[str],
    endpoint: str,
    model: str,
    out_dir: Path,
    timeout: float = 120.0,
) -> list[Path]:
    """Query an OpenAI-compatible chat endpoint once per uncached image."""
    api_key = os.environ.get("AQUASEG_MLLM_API_KEY", "")
    out_dir.mkdir(parents=True, exist_ok=True)
    prompt = PROMPT.format(categories=", ".join(categories))
    written = []
    for path in image_paths:
        record_path = out_dir / f"{path.stem}.json"
        if record_path.exists():
            logger.info("record cached, skipping %s", path.name)
            written.append(record_path)
            continue
        payload = {
            "model": model,
            "messages": [
                {
                    "role": "user",
                    "content": [
                        {"type": "text", "text": prompt},
                        {
                            "type": "image_url",
                            "image_url": {"url": _data_url(path)},
                        },
                    ],
                }
            ],
            "temperature": 0.0,
        }
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        response = requests.post(
            endpoint, json=payload, headers=headers, timeout=timeout
        )
        response.raise_for_status()
        text = response.json()["choices"][0]["message"]["content"]
        record = _parse_record(text, path.name)
        with open(record_path, "w") as f:
            json.dump(record, f, indent=1)
            f.write("\n")
        written.append(record_path)
        logger.info("record written for %s", path.name)
    return written


def _data_url(path: Path) -> str:
    suffix = path.suffix.lstrip(".").lower() or "png"
    encoded = base64.b64encode(path.read_bytes()).decode("ascii")
    return f"data:image/{suffix};base64,{encoded}"


def _parse_record(text: str, origin: str) -> dict:
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end <= start:
        raise ValueError(f"{origin}: MLLM reply contains no JSON object")
    record = json.loads(text[start : end + 1])
    missing = {"Caption", "Objects", "Attributes"} - set(record)
    if missing:
        raise ValueError(f"{origin}: MLLM record missing keys {sorted(missing)}")
    # attributes must only describe detected objects
    record["Attributes"] = {
        k: v for k, v in record["Attributes"].items() if k in record["Objects"]
    }
    return record
