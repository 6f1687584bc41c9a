"""Zero-shot term typing: prompt templating, cosine classification, the
entropy-weighted multi-model ensemble, and DistMult scoring with z-score
multi-type selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .embedstore import EmbeddingStore
from .errors import DataError

__all__ = [
    "TemplateKind",
    "TemplateStyle",
    "MemberPrediction",
    "TypePrediction",
    "apply_template",
    "cosine_classify",
    "member_predict",
    "ensemble_weights",
    "ensemble_predict",
    "distmult_scores",
    "zscore_select",
]

DEFAULT_QA_TERM = "In {domain}, explain {text}"
DEFAULT_QA_TYPE = "This {domain} category represents {text}"
DEFAULT_INSTRUCTIONAL_TERM = "Describe the {domain} concept: {text}"
DEFAULT_INSTRUCTIONAL_TYPE = "This {domain} category encompasses {text}"


class TemplateKind(str, Enum):
    plain = "plain"
    qa = "qa"
    instructional = "instructional"


@dataclass
class TemplateStyle:
    kind: TemplateKind = TemplateKind.plain
    domain_label: str | None = None
    term_template: str | None = None
    type_template: str | None = None


def _resolve_template(style: TemplateStyle, role: str) -> str:
    if role == "term":
        if style.term_template:
            return style.term_template
        base = DEFAULT_QA_TERM if style.kind is TemplateKind.qa else DEFAULT_INSTRUCTIONAL_TERM
    else:
        if style.type_template:
            return style.type_template
        base = DEFAULT_QA_TYPE if style.kind is TemplateKind.qa else DEFAULT_INSTRUCTIONAL_TYPE
    return base.replace("{domain}", style.domain_label or "this domain")


def apply_template(text: str, style: TemplateStyle, role: str = "term") -> str:
    """Render a term or type through the style's template.

    The same style is applied to both roles within a run; the type role uses
    the category template.  Non-plain templates must contain exactly one
    "{text}" slot.
    """
    if role not in ("term", "type"):
        raise DataError(f"unknown role {role!r}")
    if style.kind is TemplateKind.plain:
        return text
    template = _resolve_template(style, role)
    if template.count("{text}") != 1:
        raise DataError(f"template must contain exactly one {{text}} slot: {template!r}")
    return template.replace("{text}", text)


@dataclass
class MemberPrediction:
    member_name: str
    candidate_ids: list[str]
    similarities: np.ndarray
    probs: np.ndarray = field(init=False)
    p_max: float = field(init=False)
    h_norm: float = field(init=False)
    confidence: float = field(init=False)
    weight_raw: float = field(init=False)


@dataclass
class TypePrediction:
    term: str
    predicted: list[str]
    scores: np.ndarray


def member_predict(
    member_name: str,
    candidate_ids: list[str],
    similarities: np.ndarray,
    temperature: float = 1.0,
) -> MemberPrediction:
    """Score one ensemble member: softmax over similarities, normalized
    entropy, confidence = p_max * (1 - h_norm), and the 0.7/0.3 raw weight."""
    sims = np.asarray(similarities, dtype=np.float64)
    if sims.ndim != 1 or sims.size < 1:
        raise DataError("similarities must be a non-empty vector")
    if sims.size != len(candidate_ids):
        raise DataError("similarities do not align with candidate ids")
    if not np.all(np.isfinite(sims)):
        raise DataError("non-finite similarity score")
    if temperature <= 0:
        raise DataError("temperature must be positive")
    z = sims / temperature
    z = z - z.max()  # shift invariance
    expz = np.exp(z)
    probs = expz / expz.sum()
    k = sims.size
    entropy = float(-(probs * np.log(np.clip(probs, 1e-300, None))).sum())
    h_norm = entropy / np.log(k) if k >= 2 else 0.0
    h_norm = min(max(h_norm, 0.0), 1.0)
    member = MemberPrediction(member_name=member_name, candidate_ids=list(candidate_ids), similarities=sims)
    member.probs = probs
    member.p_max = float(probs.max())
    member.h_norm = h_norm
    member.confidence = member.p_max * (1.0 - h_norm)
    member.weight_raw = 0.7 * member.confidence + 0.3 * (1.0 - h_norm)
    return member


def _check_alignment(members: list[MemberPrediction]) -> None:
    if not members:
        raise DataError("at least one ensemble member required")
    first = members[0].candidate_ids
    for m in members[1:]:
        if m.candidate_ids != first:
            raise DataError("candidate lists differ across ensemble members")


def ensemble_weights(members: list[MemberPrediction]) -> np.ndarray:
    """Normalize raw member weights onto the simplex; an all-zero raw vector
    (every member at maximum entropy) falls back to uniform weights."""
    _check_alignment(members)
    raw = np.array([m.weight_raw for m in members], dtype=np.float64)
    total = raw.sum()
    if total == 0.0:
        return np.full(len(members), 1.0 / len(members))
    return raw / total


def _argmax_with_id_tiebreak(scores: np.ndarray, ids: list[str]) -> int:
    best = None
    for i, (score, id_) in enumerate(zip(scores, ids)):
        key = (-score, id_)
        if best is None or key < best[0]:
            best = (key, i)
    return best[1]


def ensemble_predict(term: str, members: list[MemberPrediction]) -> TypePrediction:
    """Weighted sum of raw member similarities, argmax with id tie-break."""
    _check_alignment(members)
    weights = ensemble_weights(members)
    final = np.zeros_like(members[0].similarities)
    for w, m in zip(weights, members):
        final = final + w * m.similarities
    ids = members[0].candidate_ids
    idx = _argmax_with_id_tiebreak(final, ids)
    return TypePrediction(term=term, predicted=[ids[idx]], scores=final)


def cosine_classify(term: str, term_vec: np.ndarray, type_store: EmbeddingStore) -> TypePrediction:
    """Single-model zero-shot typing: argmax cosine over candidate types."""
    if len(type_store) == 0:
        raise DataError("empty type store")
    vec = np.asarray(term_vec, dtype=np.float64)
    if vec.shape != (type_store.dim,):
        raise DataError(f"term dim {vec.shape} != store dim {type_store.dim}")
    vnorm = np.linalg.norm(vec)
    if vnorm == 0.0:
        raise DataError("zero-norm term vector")
    mat = type_store.matrix.astype(np.float64)
    norms = np.linalg.norm(mat, axis=1)
    norms[norms == 0.0] = 1.0
    scores = mat @ vec / (norms * vnorm)
    idx = _argmax_with_id_tiebreak(scores, type_store.ids)
    return TypePrediction(term=term, predicted=[type_store.ids[idx]], scores=scores)


def distmult_scores(term_vec: np.ndarray, type_store: EmbeddingStore) -> np.ndarray:
    """Raw dot products between a term vector and every candidate type vector
    (identity relation; no renormalization)."""
    vec = np.asarray(term_vec, dtype=np.float64)
    if vec.shape != (type_store.dim,):
        raise DataError(f"term dim {vec.shape} != store dim {type_store.dim}")
    return type_store.matrix.astype(np.float64) @ vec


def zscore_select(scores: np.ndarray, tau: float = 1.0) -> list[int]:
    """Indices with z-score above tau, ordered by score descending; falls back
    to the argmax singleton when sigma is zero or nothing qualifies."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size < 1:
        raise DataError("at least one score required")
    mu = scores.mean()
    sigma = scores.std()  # population standard deviation
    if sigma > 0.0:
        z = (scores - mu) / sigma
        chosen = [int(i) for i in np.argsort(-scores, kind="stable") if z[i] > tau]
        if chosen:
            return chosen
    return [int(np.argmax(scores))]
