"""
Artifact persistence: canonical JSON, CSV with round-trip float formatting,
atomic writes, and a content-addressed stage cache.
"""

import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

FLOAT_FORMAT = ".17g"


def to_plain(value: Any) -> Any:
    """
    Convert numpy scalars/arrays and non-finite floats into JSON-safe values.

    Non-finite floats become the strings "inf", "-inf" and "nan".
    """
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        x = float(value)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return value


def canonical_json(value: Any) -> str:
    return json.dumps(to_plain(value), sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def cache_key(stage: str, inputs: Any) -> str:
    """Content hash of a stage name and its canonically serialized inputs."""
    return sha256_text(canonical_json({"stage": stage, "inputs": inputs}))


def write_text_atomic(path: Path, text: str) -> Path:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path: Path, value: Any) -> Path:
    return write_text_atomic(path, canonical_json(value))


def format_cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    return str(value)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(v) for v in row])
    return buffer.getvalue()


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    return write_text_atomic(path, csv_text(header, rows))


def read_csv(path: Path) -> List[List[str]]:
    with open(path, encoding="utf-8", newline="") as handle:
        return list(csv.reader(handle))


class ArtifactCache:
    """
    Content-addressed cache of JSON payloads.

    Each entry stores its payload next to a SHA-256 checksum of the payload;
    unreadable or mismatching entries are reported and treated as misses.
    """

    def __init__(self, root: Path):
        self.root = Path(root)

    def path_for(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def load(self, key: str) -> Optional[Any]:
        path = self.path_for(key)
        if not path.exists():
            return None
        try:
            with open(path, encoding="utf-8") as handle:
                entry = json.load(handle)
            payload = entry["payload"]
            if entry["checksum"] != sha256_text(canonical_json(payload)):
                raise ValueError("checksum mismatch")
        except (OSError, ValueError, KeyError, TypeError) as e:
            logger.warning("corrupt cache entry %s (%s); recomputing", path, e)
            return None
        logger.info("cache hit %s", key[:12])
        return payload

    def store(self, key: str, payload: Any) -> Path:
        payload = to_plain(payload)
        entry = {"checksum": sha256_text(canonical_json(payload)), "payload": payload}
        return write_json(self.path_for(key), entry)
