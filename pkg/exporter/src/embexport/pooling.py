"""Token-to-text pooling reductions."""

from __future__ import annotations

import numpy as np

from .errors import ExportError

POOLINGS = ("mean", "last_token")


def mean_pool(token_embs: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Average the token vectors of each text over its attention mask."""
    mask = np.asarray(mask, dtype=np.float64)
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        raise ExportError("cannot pool a text with an empty attention mask")
    weighted = (np.asarray(token_embs, dtype=np.float64) * mask[:, :, None]).sum(axis=1)
    return weighted / counts[:, None]


def last_token_pool(token_embs: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Take the vector at the final non-padding position of each text."""
    mask = np.asarray(mask)
    if np.any(mask.sum(axis=1) == 0):
        raise ExportError("cannot pool a text with an empty attention mask")
    last = mask.shape[1] - 1 - np.argmax(mask[:, ::-1], axis=1)
    embs = np.asarray(token_embs, dtype=np.float64)
    return embs[np.arange(embs.shape[0]), last]


def pool(token_embs: np.ndarray, mask: np.ndarray, pooling: str) -> np.ndarray:
    if pooling == "mean":
        return mean_pool(token_embs, mask)
    if pooling == "last_token":
        return last_token_pool(token_embs, mask)
    raise ExportError(f"unknown pooling {pooling!r}; expected one of {POOLINGS}")
