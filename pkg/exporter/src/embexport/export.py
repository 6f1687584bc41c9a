"""The export pipeline: validate the spec, run the encoder in batches, pool,
optionally normalize, and write an EMBSTOR1 file."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ExportError
from .pooling import POOLINGS, pool
from .registry import ModelInfo, resolve_model
from .store import write_store


@dataclass
class ExportSpec:
    model_name: str
    pooling: str
    normalize: bool = False
    batch_size: int = 32
    input: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ExportError("batch_size must be >= 1")
        if self.pooling not in POOLINGS:
            raise ExportError(f"unknown pooling {self.pooling!r}")
        ids = [i for i, _ in self.input]
        if len(set(ids)) != len(ids):
            seen = set()
            dup = next(i for i in ids if i in seen or seen.add(i))
            raise ExportError(f"duplicate id in input: {dup!r}")

    def resolve(self) -> ModelInfo:
        info = resolve_model(self.model_name)
        if self.pooling != info.pooling:
            raise ExportError(
                f"pooling {self.pooling!r} contradicts the {info.model_id} "
                f"convention {info.pooling!r}"
            )
        return info


class DeterministicEncoder:
    """Offline stand-in encoder for tests and smoke runs.

    Each whitespace token maps to a fixed pseudo-random vector derived from
    the (model, token) pair, so re-exports are bit-identical and texts with
    shared vocabulary land near each other.
    """

    def __init__(self, model_id: str, dim: int):
        self.model_id = model_id
        self.dim = dim

    def _token_vector(self, token: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.model_id}\x00{token}".encode()).digest()
        seed = int.from_bytes(digest[:8], "little")
        return np.random.default_rng(seed).standard_normal(self.dim)

    def encode_tokens(self, texts: list[str]) -> tuple[np.ndarray, np.ndarray]:
        tokenized = [text.split() or ["<empty>"] for text in texts]
        width = max(len(toks) for toks in tokenized)
        embs = np.zeros((len(texts), width, self.dim), dtype=np.float64)
        mask = np.zeros((len(texts), width), dtype=np.int64)
        for i, toks in enumerate(tokenized):
            for j, tok in enumerate(toks):
                embs[i, j] = self._token_vector(tok)
                mask[i, j] = 1
        return embs, mask


class HFEncoder:
    """transformers-backed encoder; loads lazily so offline runs never touch it."""

    def __init__(self, info: ModelInfo, device: str = "cpu"):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ExportError(
                "the hf backend needs the transformers and torch packages "
                "(pip install 'embstore-exporter[hf]')"
            ) from exc
        self._torch = torch
        self.dim = info.dim
        self.device = device
        self.tokenizer = AutoTokenizer.from_pretrained(info.model_id, revision=info.revision)
        self.model = AutoModel.from_pretrained(info.model_id, revision=info.revision)
        self.model.to(device)
        self.model.eval()

    def encode_tokens(self, texts: list[str]) -> tuple[np.ndarray, np.ndarray]:
        torch = self._torch
        batch = self.tokenizer(texts, padding=True, truncation=True, return_tensors="pt")
        batch = {k: v.to(self.device) for k, v in batch.items()}
        with torch.no_grad():
            out = self.model(**batch)
        embs = out.last_hidden_state.cpu().numpy().astype(np.float64)
        mask = batch["attention_mask"].cpu().numpy()
        return embs, mask


def build_encoder(spec: ExportSpec, backend: str = "hf", device: str = "cpu"):
    info = spec.resolve()
    if backend == "deterministic":
        return DeterministicEncoder(info.model_id, info.dim)
    if backend == "hf":
        return HFEncoder(info, device=device)
    raise ExportError(f"unknown backend {backend!r}")


def export(spec: ExportSpec, out_path: str | Path, encoder=None) -> dict:
    """Embed every input text and write the store; returns a run summary.

    `encoder` may be any object with a `dim` attribute and an
    `encode_tokens(texts) -> (token_embeddings, attention_mask)` method;
    when omitted the registry model is loaded through transformers.
    """
    if not spec.input:
        raise ExportError("no input texts")
    info = spec.resolve()
    if encoder is None:
        encoder = HFEncoder(info)
    if getattr(encoder, "dim", info.dim) != info.dim:
        raise ExportError(
            f"encoder dim {encoder.dim} does not match {info.model_id} dim {info.dim}"
        )
    ids = [i for i, _ in spec.input]
    rows = np.empty((len(ids), info.dim), dtype=np.float32)
    for start in range(0, len(spec.input), spec.batch_size):
        chunk = spec.input[start : start + spec.batch_size]
        texts = [t for _, t in chunk]
        try:
            token_embs, mask = encoder.encode_tokens(texts)
        except MemoryError as exc:
            raise ExportError(
                f"out of memory encoding batch {start // spec.batch_size}; "
                f"retry with a smaller --batch"
            ) from exc
        except RuntimeError as exc:
            if "out of memory" in str(exc).lower():
                raise ExportError(
                    f"out of memory encoding batch {start // spec.batch_size}; "
                    f"retry with a smaller --batch"
                ) from exc
            raise
        pooled = pool(token_embs, mask, spec.pooling)
        if spec.normalize:
            norms = np.linalg.norm(pooled, axis=1, keepdims=True)
            if np.any(norms == 0):
                raise ExportError("cannot normalize a zero embedding")
            pooled = pooled / norms
        rows[start : start + len(chunk)] = pooled.astype(np.float32)
    if spec.normalize:
        # renormalize after the f32 cast so stored rows are unit norm exactly
        rows = rows / np.linalg.norm(rows.astype(np.float64), axis=1, keepdims=True)
        rows = rows.astype(np.float32)
    write_store(
        out_path,
        model=info.model_id,
        pooling=spec.pooling,
        l2_normalized=spec.normalize,
        ids=ids,
        matrix=rows,
        revision=info.revision,
    )
    return {
        "model": info.model_id,
        "revision": info.revision,
        "dim": info.dim,
        "count": len(ids),
        "pooling": spec.pooling,
        "normalized": spec.normalize,
        "out": str(out_path),
    }
