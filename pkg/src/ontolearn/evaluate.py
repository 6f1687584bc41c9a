"""Scoring: set-based and edge-level precision/recall/F1, and ROC AUC used to
rank taxonomy-head checkpoints."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import normalize_string
from .errors import DataError

__all__ = ["PRF", "set_prf", "edge_prf", "roc_auc", "f1_score"]


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def set_prf(predicted: set[str], gold: set[str], normalize: bool = True) -> PRF:
    """Exact-match P/R/F1 over string sets, compared after corpus
    normalization unless disabled.  Empty predictions give P = 0; an empty
    gold set is an error."""
    if normalize:
        predicted = {normalize_string(s) for s in predicted}
        gold = {normalize_string(s) for s in gold}
    if not gold:
        raise DataError("empty gold set")
    hits = len(predicted & gold)
    precision = hits / len(predicted) if predicted else 0.0
    recall = hits / len(gold)
    return PRF(precision=precision, recall=recall, f1=f1_score(precision, recall))


def edge_prf(
    predicted: set[tuple[str, str]], gold: set[tuple[str, str]], normalize: bool = True
) -> PRF:
    """Directed-edge P/R/F1 on (child, parent) string pairs."""
    if normalize:
        predicted = {(normalize_string(c), normalize_string(p)) for c, p in predicted}
        gold = {(normalize_string(c), normalize_string(p)) for c, p in gold}
    if not gold:
        raise DataError("empty gold edge set")
    hits = len(predicted & gold)
    precision = hits / len(predicted) if predicted else 0.0
    recall = hits / len(gold)
    return PRF(precision=precision, recall=recall, f1=f1_score(precision, recall))


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """ROC AUC in the rank (Mann-Whitney) form with average ranks for ties."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(int)
    if scores.shape != labels.shape:
        raise DataError("scores and labels must align")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("roc_auc requires at least one positive and one negative")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    rank_sum_pos = float(ranks[labels == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
