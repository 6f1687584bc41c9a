"""EMBSTOR1 writer.

Layout: magic "EMBSTOR1", u32 LE header length, UTF-8 JSON header with
{"version": 1, "model", "dim", "count", "pooling", "l2_normalized"} plus the
pinned model "revision", then one record per row: u16 LE id byte length, the
id bytes, and dim little-endian float32 values.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ExportError

MAGIC = b"EMBSTOR1"


def write_store(
    path: str | Path,
    model: str,
    pooling: str,
    l2_normalized: bool,
    ids: list[str],
    matrix: np.ndarray,
    revision: str | None = None,
) -> None:
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ExportError(f"matrix shape {matrix.shape} does not match {len(ids)} ids")
    header = {
        "version": 1,
        "model": model,
        "dim": int(matrix.shape[1]),
        "count": len(ids),
        "pooling": pooling,
        "l2_normalized": bool(l2_normalized),
    }
    if revision is not None:
        header["revision"] = revision
    header_bytes = json.dumps(header, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for id_, row in zip(ids, matrix):
            id_bytes = id_.encode("utf-8")
            if len(id_bytes) > 0xFFFF:
                raise ExportError(f"id too long: {id_!r}")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(row.astype("<f4").tobytes())
