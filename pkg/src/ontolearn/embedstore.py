"""Dense embedding stores: binary persistence, normalization, exact k-NN,
and a client for OpenAI-compatible embeddings services.

Store file layout: magic "EMBSTOR1", u32 LE header length, UTF-8 JSON header
{"version":1,"model","dim","count","pooling","l2_normalized"}, then `count`
records of (u16 LE id byte-length, id bytes, dim x f32 LE).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ServiceError
from .http_client import post_json

__all__ = [
    "EmbeddingStore",
    "Neighbor",
    "l2_normalize",
    "cosine",
    "knn",
    "read_store",
    "write_store",
    "fetch_embeddings",
]

MAGIC = b"EMBSTOR1"
POOLINGS = ("mean", "last_token")


@dataclass
class EmbeddingStore:
    model_name: str
    dim: int
    pooling: str
    l2_normalized: bool
    ids: list[str]
    matrix: np.ndarray  # (len(ids), dim) float32

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float32)
        if self.dim <= 0:
            raise DataError("store dim must be positive")
        if self.pooling not in POOLINGS:
            raise DataError(f"unknown pooling {self.pooling!r}")
        if self.matrix.shape != (len(self.ids), self.dim):
            raise DataError(
                f"matrix shape {self.matrix.shape} inconsistent with "
                f"{len(self.ids)} ids x dim {self.dim}"
            )
        if len(set(self.ids)) != len(self.ids):
            raise DataError("duplicate id in store")
        if self.l2_normalized and len(self.ids):
            norms = np.linalg.norm(self.matrix, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-4):
                raise DataError("l2_normalized store contains non-unit rows")

    def __len__(self) -> int:
        return len(self.ids)

    def row(self, id_: str) -> np.ndarray:
        try:
            return self.matrix[self.ids.index(id_)]
        except ValueError:
            raise DataError(f"unknown id {id_!r}") from None


@dataclass(frozen=True)
class Neighbor:
    id: str
    score: float


def l2_normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise DataError("zero-norm vector")
    return v / norm


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DataError(f"dim mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DataError("zero-norm vector")
    return float(np.dot(u, v) / (nu * nv))


def knn(store: EmbeddingStore, query: np.ndarray, k: int) -> list[Neighbor]:
    """Exact top-k rows by cosine similarity, ties broken by id ascending."""
    if k < 1:
        raise DataError("k must be >= 1")
    if len(store) == 0:
        raise DataError("empty store")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (store.dim,):
        raise DataError(f"query dim {query.shape} != store dim {store.dim}")
    qnorm = np.linalg.norm(query)
    if qnorm == 0.0:
        raise DataError("zero-norm query")
    mat = store.matrix.astype(np.float64)
    row_norms = np.linalg.norm(mat, axis=1)
    row_norms[row_norms == 0.0] = 1.0  # zero rows score 0 rather than erroring
    sims = mat @ query / (row_norms * qnorm)
    order = sorted(range(len(store)), key=lambda i: (-sims[i], store.ids[i]))
    return [Neighbor(id=store.ids[i], score=float(sims[i])) for i in order[:k]]


def write_store(store: EmbeddingStore, path: str | Path) -> None:
    header = {
        "version": 1,
        "model": store.model_name,
        "dim": store.dim,
        "count": len(store.ids),
        "pooling": store.pooling,
        "l2_normalized": store.l2_normalized,
    }
    header_bytes = json.dumps(header, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for id_, row in zip(store.ids, store.matrix):
            id_bytes = id_.encode("utf-8")
            if len(id_bytes) > 0xFFFF:
                raise DataError(f"id too long: {id_!r}")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(np.asarray(row, dtype="<f4").tobytes())


def read_store(path: str | Path) -> EmbeddingStore:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise DataError(f"{path}: bad magic")
    offset = 8
    if len(data) < offset + 4:
        raise DataError(f"{path}: truncated header length")
    (header_len,) = struct.unpack_from("<I", data, offset)
    offset += 4
    try:
        header = json.loads(data[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: bad header: {exc}") from exc
    offset += header_len
    if header.get("version") != 1:
        raise DataError(f"{path}: unsupported version {header.get('version')!r}")
    dim, count = int(header["dim"]), int(header["count"])
    ids: list[str] = []
    rows = np.empty((count, dim), dtype=np.float32)
    rec_bytes = dim * 4
    for i in range(count):
        if len(data) < offset + 2:
            raise DataError(f"{path}: truncated record {i}")
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if len(data) < offset + id_len + rec_bytes:
            raise DataError(f"{path}: truncated record {i}")
        ids.append(data[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        rows[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += rec_bytes
    if offset != len(data):
        raise DataError(f"{path}: {len(data) - offset} trailing bytes")
    return EmbeddingStore(
        model_name=header["model"],
        dim=dim,
        pooling=header["pooling"],
        l2_normalized=bool(header["l2_normalized"]),
        ids=ids,
        matrix=rows,
    )


def fetch_embeddings(
    endpoint: str,
    model_name: str,
    texts: list[tuple[str, str]],
    batch_size: int = 32,
    normalize: bool = False,
    pooling: str = "mean",
    api_key: str | None = None,
    transport=None,
) -> EmbeddingStore:
    """Fetch embeddings for (id, text) pairs from an OpenAI-compatible service.

    Requests are batched; response rows are reordered by their "index" field.
    `transport` is forwarded to httpx for in-process testing.
    """
    if batch_size < 1:
        raise DataError("batch_size must be >= 1")
    ids = [i for i, _ in texts]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate id in input texts")
    vectors: list[list[float]] = []
    for start in range(0, len(texts), batch_size):
        batch = texts[start : start + batch_size]
        payload = {"model": model_name, "input": [t for _, t in batch]}
        try:
            resp = post_json(endpoint, payload, api_key=api_key, transport=transport)
        except ServiceError as exc:
            exc.batch_index = start // batch_size
            raise
        items = resp.get("data")
        if not isinstance(items, list) or len(items) != len(batch):
            got = len(items) if isinstance(items, list) else "no"
            raise ServiceError(
                f"count mismatch: {got} vectors for {len(batch)} inputs",
                batch_index=start // batch_size,
            )
        ordered = sorted(items, key=lambda it: it["index"])
        vectors.extend(it["embedding"] for it in ordered)
    dim = len(vectors[0]) if vectors else 0
    matrix = np.asarray(vectors, dtype=np.float32).reshape(len(vectors), dim)
    if normalize and len(vectors):
        matrix = np.stack([l2_normalize(row) for row in matrix]).astype(np.float32)
    return EmbeddingStore(
        model_name=model_name,
        dim=dim if dim else 1,
        pooling=pooling,
        l2_normalized=normalize,
        ids=list(ids),
        matrix=matrix if dim else np.empty((0, 1), dtype=np.float32),
    )
