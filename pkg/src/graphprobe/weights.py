"""Flat-file persistence for named tensor bundles.

Byte layout, version 1:

* one JSON header line, UTF-8, terminated by ``\\n``::

      {"format": "graphprobe-weights", "version": 1,
       "meta": {...caller metadata...},
       "tensors": [{"name": "gcn0_w", "rows": 1, "cols": 8}, ...]}

* immediately after the newline, for each tensor in listed order, exactly
  ``rows * cols`` float64 values, little-endian, row-major, no padding.

The header carries everything needed to rebuild the owning model; the
body is a pure dump of numbers. Files are self-describing and diffable
with a one-line ``head -1``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .autodiff import Tensor
from .errors import WeightsError

FORMAT_NAME = "graphprobe-weights"
VERSION = 1


def save_tensors(path: str | Path, named: Sequence[tuple[str, Tensor]],
                 meta: Mapping) -> None:
    header = {
        "format": FORMAT_NAME,
        "version": VERSION,
        "meta": dict(meta),
        "tensors": [{"name": name, "rows": t.rows, "cols": t.cols}
                    for name, t in named],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        for _, t in named:
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_tensors(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read back (meta, {name: array}) and verify the byte count exactly."""
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise WeightsError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightsError(f"{path}: unreadable header: {exc}") from exc
    if header.get("format") != FORMAT_NAME:
        raise WeightsError(f"{path}: not a {FORMAT_NAME} file")
    if header.get("version") != VERSION:
        raise WeightsError(f"{path}: unsupported version {header.get('version')}")

    body = raw[newline + 1:]
    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header.get("tensors", []):
        try:
            name, rows, cols = entry["name"], int(entry["rows"]), int(entry["cols"])
        except (KeyError, TypeError, ValueError) as exc:
            raise WeightsError(f"{path}: malformed tensor entry {entry!r}") from exc
        nbytes = rows * cols * 8
        chunk = body[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise WeightsError(f"{path}: truncated at tensor {name!r}")
        tensors[name] = np.frombuffer(chunk, dtype="<f8").reshape(rows, cols).copy()
        offset += nbytes
    if offset != len(body):
        raise WeightsError(f"{path}: {len(body) - offset} trailing bytes")
    return header.get("meta", {}), tensors
