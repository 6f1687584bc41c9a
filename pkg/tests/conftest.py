import json

import numpy as np
import pytest

from ontolearn.corpus import Corpus, Document
from ontolearn.embedstore import EmbeddingStore, write_store


@pytest.fixture
def small_corpus() -> Corpus:
    docs = [
        Document("d1", "Displays", "a liquid crystal display uses a cell array"),
        Document("d2", "Geology", "granite and basalt are igneous rocks"),
        Document("d3", "Biology", "cellular structures; the cell membrane"),
    ]
    return Corpus(
        documents=docs,
        terms=["liquid crystal", "cell", "granite", "plasma"],
        types=["Material", "Rock", "Cell"],
        term_to_types={"granite": {"Rock"}, "cell": {"Cell"}},
        raw_type_to_docs={"Rock": {"d2"}, "Material": {"d1"}},
    )


def make_store(ids, rows, model="test", pooling="mean", normalized=False) -> EmbeddingStore:
    matrix = np.asarray(rows, dtype=np.float32)
    return EmbeddingStore(
        model_name=model,
        dim=matrix.shape[1],
        pooling=pooling,
        l2_normalized=normalized,
        ids=list(ids),
        matrix=matrix,
    )


@pytest.fixture
def corpus_files(tmp_path, small_corpus):
    """Write the small corpus out as the challenge file family."""
    docs_path = tmp_path / "documents.jsonl"
    with open(docs_path, "w", encoding="utf-8") as fh:
        for d in small_corpus.documents:
            fh.write(json.dumps({"id": d.id, "title": d.title, "text": d.text}) + "\n")
    terms_path = tmp_path / "terms.txt"
    terms_path.write_text("".join(t + "\n" for t in small_corpus.terms))
    types_path = tmp_path / "types.txt"
    types_path.write_text("".join(t + "\n" for t in small_corpus.types))
    t2t_path = tmp_path / "terms2types.json"
    t2t_path.write_text(json.dumps({k: sorted(v) for k, v in small_corpus.term_to_types.items()}))
    t2d_path = tmp_path / "terms2docs.json"
    t2d_path.write_text(json.dumps({k: sorted(v) for k, v in small_corpus.raw_type_to_docs.items()}))
    return {
        "documents": str(docs_path),
        "terms": str(terms_path),
        "types": str(types_path),
        "terms2types": str(t2t_path),
        "terms2docs": str(t2d_path),
    }


def store_path(tmp_path, name, ids, rows, **kwargs):
    store = make_store(ids, rows, **kwargs)
    path = tmp_path / name
    write_store(store, path)
    return str(path)
