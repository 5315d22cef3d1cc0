"""Checkpoint container: one JSON header line, then a flat float64 payload.

Layout::

    {"format": "qdetect-checkpoint", "version": 1, "kind": ..., "tensors": [...], ...}\n
    <little-endian float64 values of every tensor, back to back>

Each manifest entry carries ``name``, ``shape`` and ``offset`` (in bytes,
relative to the start of the payload).
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT = "qdetect-checkpoint"
VERSION = 1
_DTYPE = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, kind: str, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    manifest = []
    offset = 0
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * _DTYPE.itemsize
    header = {"format": FORMAT, "version": VERSION, "kind": kind, "tensors": manifest}
    header.update(meta or {})
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8") + b"\n")
        for name in sorted(tensors):
            fh.write(np.ascontiguousarray(tensors[name], dtype=_DTYPE).tobytes())


def read_header(path: str | Path) -> dict:
    with Path(path).open("rb") as fh:
        return _parse_header(fh.readline())


def _parse_header(line: bytes) -> dict:
    try:
        header = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise CheckpointError("not a qdetect checkpoint (bad header)") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise CheckpointError("not a qdetect checkpoint")
    if header.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
    return header


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise CheckpointError("not a qdetect checkpoint (no header)")
    header = _parse_header(data[:nl])
    payload = memoryview(data)[nl + 1 :]
    tensors = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = entry["offset"] + count * _DTYPE.itemsize
        if end > len(payload):
            raise CheckpointError(f"truncated payload for tensor {entry['name']!r}")
        arr = np.frombuffer(payload[entry["offset"] : end], dtype=_DTYPE)
        tensors[entry["name"]] = arr.astype(np.float64).reshape(entry["shape"])
    return header, tensors
