"""Retrieval-augmented few-shot prompt assembly and structured-output handling.

Covers document-level extraction prompts (Method 1: doc->type exemplars,
Method 2: chained term & type exemplars), term-typing prompts, parsing of the
{"terms":[...],"types":[...]} output contract, and a chat-completion client
with a deterministic offline mock.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .corpus import Corpus, Document, TermDocIndex, tfidf_keywords
from .errors import DataError, ServiceError
from .http_client import post_json

__all__ = [
    "Schema",
    "InstructionPair",
    "Prompt",
    "ExtractionResult",
    "build_instruction_pair",
    "build_prompt_taskA",
    "build_prompt_taskB",
    "parse_structured_output",
    "aggregate_results",
    "complete",
    "mock_complete",
]

DEFAULT_SYSTEM = (
    "You extract ontology terms and types from domain documents. "
    'Answer with a single JSON object of the form {"terms": [...], "types": [...]}.'
)
MAX_DEMOS = 3


class Schema(str, Enum):
    terms_and_types = "terms_and_types"
    types_only = "types_only"


@dataclass(frozen=True)
class InstructionPair:
    instruction: str
    output: str


@dataclass
class Prompt:
    system: str
    demonstrations: list[InstructionPair]
    query: str
    expected_schema: Schema

    def __post_init__(self):
        if not self.query:
            raise DataError("prompt query must be non-empty")
        if len(self.demonstrations) > MAX_DEMOS:
            raise DataError(f"at most {MAX_DEMOS} demonstrations allowed")


@dataclass
class ExtractionResult:
    terms: list[str] = field(default_factory=list)
    types: list[str] = field(default_factory=list)


def _canonical_output(terms: set[str], types: set[str]) -> str:
    return json.dumps({"terms": sorted(terms), "types": sorted(types)}, ensure_ascii=False)


def _instruction_block(doc: Document, keywords: list[str]) -> str:
    parts = [f"TITLE: {doc.title}", f"TEXT: {doc.text}"]
    if keywords:
        parts.append("KEYWORDS: " + ", ".join(keywords))
    return "\n".join(parts)


def build_instruction_pair(
    doc: Document, terms: set[str], types: set[str], keywords: list[str]
) -> InstructionPair:
    """Pair a document's title/text/keyword block with its canonical JSON output."""
    return InstructionPair(
        instruction=_instruction_block(doc, keywords),
        output=_canonical_output(terms, types),
    )


def build_prompt_taskA(
    test_doc: Document,
    neighbors: list[str],
    method: str,
    corpus: Corpus,
    index: TermDocIndex,
    keyword_k: int = 20,
    system: str = DEFAULT_SYSTEM,
) -> tuple[Prompt, int]:
    """Assemble an extraction prompt from retrieved neighbor documents.

    Method "m1" pairs each neighbor with the types listing it in the shipped
    type->docs file (terms unknown); "m2" pairs it with both terms (via the
    repaired index) and their types.  Neighbors without supervision are
    skipped; the skip count is returned alongside the prompt.
    """
    if method not in ("m1", "m2"):
        raise DataError(f"unknown method {method!r}")
    demos: list[InstructionPair] = []
    skipped = 0
    for doc_id in neighbors:
        if doc_id not in corpus.doc_by_id:
            raise DataError(f"neighbor doc {doc_id!r} not in corpus")
        doc = corpus.doc_by_id[doc_id]
        if method == "m1":
            types = {t for t, docs in corpus.raw_type_to_docs.items() if doc_id in docs}
            terms: set[str] = set()
            if not types:
                skipped += 1
                continue
        else:
            terms = {
                term
                for term, docs in index.term_to_docs.items()
                if doc_id in docs and term in corpus.term_to_types
            }
            types = set().union(*(corpus.term_to_types[t] for t in terms)) if terms else set()
            if not terms:
                skipped += 1
                continue
        keywords = tfidf_keywords(corpus, doc_id, keyword_k)
        demos.append(build_instruction_pair(doc, terms, types, keywords))
    query = _instruction_block(
        test_doc,
        tfidf_keywords(corpus, test_doc.id, keyword_k) if test_doc.id in corpus.doc_by_id else [],
    )
    prompt = Prompt(
        system=system,
        demonstrations=demos,
        query=query,
        expected_schema=Schema.terms_and_types,
    )
    return prompt, skipped


def build_prompt_taskB(
    term: str,
    neighbors: list[tuple[str, set[str]]],
    system: str = "You assign ontology types to terms. "
    'Answer with a single JSON object of the form {"types": [...]}.',
) -> Prompt:
    """Assemble a term-typing prompt from retrieved (term, types) exemplars."""
    demos = [
        InstructionPair(
            instruction=f"TERM: {t}",
            output=json.dumps({"types": sorted(types)}, ensure_ascii=False),
        )
        for t, types in neighbors
    ]
    return Prompt(
        system=system,
        demonstrations=demos,
        query=f"TERM: {term}",
        expected_schema=Schema.types_only,
    )


def _dedup_ci(values: list[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for v in values:
        v = v.strip()
        if not v:
            continue
        key = v.casefold()
        if key in seen:
            continue
        seen.add(key)
        out.append(v)
    return out


def parse_structured_output(text: str, schema: Schema = Schema.terms_and_types) -> ExtractionResult:
    """Parse the first balanced JSON object found in model output.

    Missing keys become empty arrays; values are trimmed and deduplicated
    case-insensitively, keeping the first casing seen.
    """
    decoder = json.JSONDecoder()
    obj = None
    pos = text.find("{")
    while pos >= 0:
        try:
            candidate, _ = decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            pos = text.find("{", pos + 1)
            continue
        if isinstance(candidate, dict):
            obj = candidate
            break
        pos = text.find("{", pos + 1)
    if obj is None:
        raise DataError(f"no parseable JSON object in output: {text!r}")

    def pick(key: str) -> list[str]:
        vals = obj.get(key, [])
        if not isinstance(vals, list):
            raise DataError(f"output key {key!r} is not an array")
        return _dedup_ci([str(v) for v in vals])

    result = ExtractionResult(terms=pick("terms"), types=pick("types"))
    if schema is Schema.types_only:
        result.terms = []
    return result


def aggregate_results(results: list[ExtractionResult]) -> ExtractionResult:
    """Concatenate in input order, then deduplicate (case-insensitive,
    first occurrence wins)."""
    terms: list[str] = []
    types: list[str] = []
    for r in results:
        terms.extend(r.terms)
        types.extend(r.types)
    return ExtractionResult(terms=_dedup_ci(terms), types=_dedup_ci(types))


def render_messages(prompt: Prompt) -> list[dict[str, str]]:
    """Flatten a Prompt into chat messages: demonstrations as prior turns,
    the query as the final user message."""
    messages = [{"role": "system", "content": prompt.system}]
    for demo in prompt.demonstrations:
        messages.append({"role": "user", "content": demo.instruction})
        messages.append({"role": "assistant", "content": demo.output})
    messages.append({"role": "user", "content": prompt.query})
    return messages


def mock_complete(prompt: Prompt) -> str:
    """Deterministic offline completion: echo the union of the demonstrations'
    outputs under the prompt's schema, or canned content when there are none."""
    terms: set[str] = set()
    types: set[str] = set()
    for demo in prompt.demonstrations:
        try:
            parsed = json.loads(demo.output)
        except json.JSONDecodeError:
            continue
        terms.update(str(v) for v in parsed.get("terms", []))
        types.update(str(v) for v in parsed.get("types", []))
    if not terms and not types:
        terms, types = {"sample term"}, {"sample type"}
    if prompt.expected_schema is Schema.types_only:
        return json.dumps({"types": sorted(types)}, ensure_ascii=False)
    return _canonical_output(terms, types)


def complete(
    prompt: Prompt,
    endpoint: str | None = None,
    model: str = "default",
    temperature: float = 0.0,
    api_key: str | None = None,
    transport=None,
    retries: int = 3,
) -> str:
    """Run a prompt against a chat-completions service, or against the
    built-in mock when no endpoint is configured."""
    if endpoint is None or endpoint == "mock":
        return mock_complete(prompt)
    payload = {
        "model": model,
        "messages": render_messages(prompt),
        "temperature": temperature,
    }
    resp = post_json(endpoint, payload, api_key=api_key, retries=retries, transport=transport)
    try:
        content = resp["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ServiceError(f"malformed completion response: {resp!r}") from exc
    if not content:
        raise ServiceError("empty completion")
    return content
