"""Known encoder checkpoints with their dimensions and pooling conventions.

Revisions are pinned so a store header records exactly which weights
produced it.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ExportError


@dataclass(frozen=True)
class ModelInfo:
    model_id: str
    dim: int
    pooling: str  # the model's native convention
    revision: str


MODEL_REGISTRY: dict[str, ModelInfo] = {
    "sentence-transformers/all-mpnet-base-v2": ModelInfo(
        model_id="sentence-transformers/all-mpnet-base-v2",
        dim=768,
        pooling="mean",
        revision="9a3225965996d404b775526de6dbfe85d3368642",
    ),
    "Qwen/Qwen3-Embedding-4B": ModelInfo(
        model_id="Qwen/Qwen3-Embedding-4B",
        dim=2560,
        pooling="last_token",
        revision="636cd9bf47d976946c9de0a7eff9e5e9e22e4e44",
    ),
    "BAAI/bge-m3": ModelInfo(
        model_id="BAAI/bge-m3",
        dim=1024,
        pooling="mean",
        revision="5617a9f61b028005a4858fdac845db406aefb181",
    ),
}

# short names accepted on the command line
ALIASES = {
    "all-mpnet-base-v2": "sentence-transformers/all-mpnet-base-v2",
    "mpnet": "sentence-transformers/all-mpnet-base-v2",
    "Qwen3-Embedding-4B": "Qwen/Qwen3-Embedding-4B",
    "qwen3-4b": "Qwen/Qwen3-Embedding-4B",
    "bge-m3": "BAAI/bge-m3",
}


def resolve_model(name: str) -> ModelInfo:
    key = ALIASES.get(name, name)
    try:
        return MODEL_REGISTRY[key]
    except KeyError:
        known = ", ".join(sorted(set(MODEL_REGISTRY) | set(ALIASES)))
        raise ExportError(f"unknown model {name!r}; known: {known}") from None
