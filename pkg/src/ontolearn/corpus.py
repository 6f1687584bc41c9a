"""Challenge-corpus loading, index repair, and TF-IDF keyword extraction.

The distributed file family is: documents.jsonl, terms.txt, types.txt,
terms2types.json, and terms2docs.json.  The shipped terms2docs.json actually
maps *types* to document ids, so a reliable term -> documents index has to be
reconstructed by rescanning the documents for exact term matches.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError

__all__ = [
    "Document",
    "Corpus",
    "TermDocIndex",
    "SupervisionTuple",
    "OverlapStats",
    "load_corpus",
    "repair_term_doc_index",
    "build_supervision",
    "term_type_overlap",
    "tfidf_keywords",
    "normalize_string",
    "term_matches",
]

_WS_RE = re.compile(r"\s+")


def normalize_string(s: str) -> str:
    """Casefold and collapse internal whitespace; used for dedup and overlap."""
    return _WS_RE.sub(" ", s.casefold()).strip()


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str


@dataclass
class Corpus:
    documents: list[Document]
    terms: list[str]
    types: list[str]
    term_to_types: dict[str, set[str]]
    raw_type_to_docs: dict[str, set[str]]
    doc_by_id: dict[str, Document] = field(default_factory=dict)

    def __post_init__(self):
        if not self.doc_by_id:
            self.doc_by_id = {d.id: d for d in self.documents}


@dataclass
class TermDocIndex:
    term_to_docs: dict[str, set[str]]


@dataclass(frozen=True)
class SupervisionTuple:
    doc_id: str
    term: str
    types: frozenset[str]


@dataclass(frozen=True)
class OverlapStats:
    intersection_count: int
    norm_by_terms: float
    norm_by_types: float


def _read_lines_dedup(path: Path) -> list[str]:
    """Read one entry per line, trim, and drop duplicates by normalized form
    keeping the first occurrence."""
    seen: set[str] = set()
    out: list[str] = []
    for line in path.read_text(encoding="utf-8").splitlines():
        entry = line.strip()
        if not entry:
            continue
        key = normalize_string(entry)
        if key in seen:
            continue
        seen.add(key)
        out.append(entry)
    return out


def load_corpus(
    documents_path: str | Path,
    terms_path: str | Path,
    types_path: str | Path,
    terms2types_path: str | Path | None = None,
    terms2docs_path: str | Path | None = None,
) -> Corpus:
    """Load the challenge file family into a Corpus.

    terms2types.json maps term -> [type, ...]; terms2docs.json is kept under
    its real meaning (type -> document ids).  Both map files are optional.

    Raises DataError for malformed JSON lines, missing required document
    fields, duplicate document ids, or unresolvable doc ids in terms2docs.
    """
    documents: list[Document] = []
    seen_ids: set[str] = set()
    with open(documents_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed JSON at line {lineno} of {documents_path}: {exc}") from exc
            for fld in ("id", "title", "text"):
                if fld not in obj:
                    raise DataError(f"missing field {fld} at line {lineno} of {documents_path}")
            doc = Document(id=str(obj["id"]), title=str(obj["title"]), text=str(obj["text"]))
            if not doc.id:
                raise DataError(f"empty doc id at line {lineno} of {documents_path}")
            if doc.id in seen_ids:
                raise DataError(f"duplicate doc id {doc.id!r} at line {lineno} of {documents_path}")
            seen_ids.add(doc.id)
            documents.append(doc)

    terms = _read_lines_dedup(Path(terms_path))
    types = _read_lines_dedup(Path(types_path))

    term_to_types: dict[str, set[str]] = {}
    if terms2types_path is not None:
        raw = json.loads(Path(terms2types_path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise DataError(f"{terms2types_path}: expected a JSON object")
        term_to_types = {str(k): {str(v) for v in vals} for k, vals in raw.items()}

    raw_type_to_docs: dict[str, set[str]] = {}
    if terms2docs_path is not None:
        raw = json.loads(Path(terms2docs_path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise DataError(f"{terms2docs_path}: expected a JSON object")
        raw_type_to_docs = {str(k): {str(v) for v in vals} for k, vals in raw.items()}
        for key, doc_ids in raw_type_to_docs.items():
            for doc_id in doc_ids:
                if doc_id not in seen_ids:
                    raise DataError(f"terms2docs entry {key!r} references unknown doc id {doc_id!r}")

    return Corpus(
        documents=documents,
        terms=terms,
        types=types,
        term_to_types=term_to_types,
        raw_type_to_docs=raw_type_to_docs,
    )


def term_matches(term: str, text: str) -> bool:
    """Casefolded substring match with word boundaries on both ends.

    A boundary is the start/end of the text or a non-alphanumeric character,
    so "cell" matches "a cell." but not "cellular".
    """
    needle = term.casefold()
    if not needle:
        return False
    haystack = text.casefold()
    start = 0
    while True:
        pos = haystack.find(needle, start)
        if pos < 0:
            return False
        before_ok = pos == 0 or not haystack[pos - 1].isalnum()
        end = pos + len(needle)
        after_ok = end == len(haystack) or not haystack[end].isalnum()
        if before_ok and after_ok:
            return True
        start = pos + 1


def repair_term_doc_index(corpus: Corpus) -> TermDocIndex:
    """Rescan every document for exact term matches, reconstructing the
    term -> documents index.  Terms with no match map to an empty set."""
    index: dict[str, set[str]] = {}
    for term in corpus.terms:
        hits = {
            doc.id
            for doc in corpus.documents
            if term_matches(term, doc.title) or term_matches(term, doc.text)
        }
        index[term] = hits
    return TermDocIndex(term_to_docs=index)


def build_supervision(
    corpus: Corpus, index: TermDocIndex
) -> tuple[list[SupervisionTuple], int]:
    """Join the repaired index with term_to_types into supervision tuples.

    Returns the tuples ordered by (doc id, term) and the count of (doc, term)
    pairs skipped because the term has no type annotation.
    """
    tuples: list[SupervisionTuple] = []
    skipped = 0
    for term, doc_ids in index.term_to_docs.items():
        if term not in corpus.term_to_types:
            skipped += len(doc_ids)
            continue
        types = frozenset(corpus.term_to_types[term])
        for doc_id in doc_ids:
            tuples.append(SupervisionTuple(doc_id=doc_id, term=term, types=types))
    tuples.sort(key=lambda t: (t.doc_id, t.term))
    return tuples, skipped


def term_type_overlap(corpus: Corpus) -> OverlapStats:
    """Size of the term/type intersection on normalized strings, reported
    under both normalizations (by |terms| and by |types|)."""
    terms = {normalize_string(t) for t in corpus.terms}
    types = {normalize_string(t) for t in corpus.types}
    if not terms or not types:
        raise DataError("empty set: term/type overlap is undefined")
    inter = len(terms & types)
    return OverlapStats(
        intersection_count=inter,
        norm_by_terms=inter / len(terms),
        norm_by_types=inter / len(types),
    )


def tokenize(text: str, min_token_len: int = 2) -> list[str]:
    """Casefold, split on non-alphanumeric runs, drop short tokens."""
    return [t for t in re.split(r"[\W_]+", text.casefold()) if len(t) >= min_token_len]


def tfidf_keywords(
    corpus: Corpus, doc_id: str, k: int = 20, min_token_len: int = 2
) -> list[str]:
    """Top-k tokens of a document by TF-IDF.

    tf is the raw in-document count; idf = ln((1 + N) / (1 + df)) + 1 with N
    the corpus document count.  Ties are broken lexicographically.
    """
    if k < 1:
        raise DataError("k must be >= 1")
    if doc_id not in corpus.doc_by_id:
        raise DataError(f"unknown doc id {doc_id!r}")
    n_docs = len(corpus.documents)
    df: Counter[str] = Counter()
    doc_tokens: dict[str, list[str]] = {}
    for doc in corpus.documents:
        toks = tokenize(doc.title + "\n" + doc.text, min_token_len)
        doc_tokens[doc.id] = toks
        df.update(set(toks))
    tf = Counter(doc_tokens[doc_id])
    scored = [
        (count * (math.log((1 + n_docs) / (1 + df[tok])) + 1), tok)
        for tok, count in tf.items()
    ]
    scored.sort(key=lambda st: (-st[0], st[1]))
    return [tok for _, tok in scored[:k]]
