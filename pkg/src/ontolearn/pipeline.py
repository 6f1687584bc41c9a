"""End-to-end task runners shared by the HTTP service and the CLI.

Every runner reads file inputs, writes its artifacts plus a manifest
(config echo, input/output hashes, package version) into the output
directory, and returns a JSON-serializable summary.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from . import corpus as corpus_mod
from . import embedstore, evaluate, fewshot, taxo, zeroshot
from .errors import ConfigError, DataError

__all__ = [
    "run_repair",
    "run_tfidf",
    "run_embed_fetch",
    "run_knn",
    "run_prompt_a",
    "run_prompt_b",
    "run_zeroshot",
    "run_ensemble",
    "run_distmult",
    "run_taxo_train",
    "run_taxo_grid",
    "run_taxo_predict",
    "run_eval",
]

RETRIEVAL_K = 3


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, task: str, config: dict, inputs: dict, outputs: list[Path]) -> Path:
    manifest = {
        "task": task,
        "config": config,
        "inputs": {name: {"path": str(p), "sha256": _sha256(Path(p))} for name, p in inputs.items()},
        "outputs": {p.name: _sha256(p) for p in outputs},
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def _out_dir(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_corpus_from_paths(paths: dict) -> corpus_mod.Corpus:
    for required in ("documents", "terms", "types"):
        if required not in paths:
            raise ConfigError(f"missing corpus path {required!r}")
        if not Path(paths[required]).exists():
            raise ConfigError(f"corpus file not found: {paths[required]}")
    return corpus_mod.load_corpus(
        paths["documents"],
        paths["terms"],
        paths["types"],
        paths.get("terms2types"),
        paths.get("terms2docs"),
    )


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8")


def _write_lines(path: Path, lines: list[str]) -> None:
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _read_edge_file(path: str) -> list[tuple[str, str]]:
    """Taxonomy files are JSON arrays of {"parent": ..., "child": ...}."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise DataError(f"{path}: expected a JSON array of edges")
    edges = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or "parent" not in item or "child" not in item:
            raise DataError(f"{path}: edge {i} must have parent and child")
        edges.append((str(item["child"]), str(item["parent"])))
    return edges


def _write_edge_file(path: Path, edges: set[tuple[str, str]]) -> None:
    rows = [{"child": c, "parent": p} for c, p in sorted(edges)]
    _write_json(path, rows)


# ---------------------------------------------------------------------------
# corpus tasks


def run_repair(paths: dict, out: str) -> dict:
    corpus = _load_corpus_from_paths(paths)
    index = corpus_mod.repair_term_doc_index(corpus)
    tuples, skipped = corpus_mod.build_supervision(corpus, index)
    overlap = corpus_mod.term_type_overlap(corpus)
    out_dir = _out_dir(out)
    repaired_path = out_dir / "terms2docs.repaired.json"
    _write_json(repaired_path, {t: sorted(d) for t, d in index.term_to_docs.items()})
    supervision_path = out_dir / "supervision.jsonl"
    with open(supervision_path, "w", encoding="utf-8") as fh:
        for tup in tuples:
            fh.write(json.dumps(
                {"doc_id": tup.doc_id, "term": tup.term, "types": sorted(tup.types)},
                ensure_ascii=False) + "\n")
    summary = {
        "n_documents": len(corpus.documents),
        "n_terms": len(corpus.terms),
        "n_types": len(corpus.types),
        "n_supervision_tuples": len(tuples),
        "skipped_pairs": skipped,
        "overlap": {
            "intersection_count": overlap.intersection_count,
            "norm_by_terms": overlap.norm_by_terms,
            "norm_by_types": overlap.norm_by_types,
        },
    }
    _write_manifest(out_dir, "repair", {"paths": paths}, paths, [repaired_path, supervision_path])
    return summary


def run_tfidf(paths: dict, out: str, doc_id: str | None = None, k: int = 20) -> dict:
    corpus = _load_corpus_from_paths(paths)
    doc_ids = [doc_id] if doc_id is not None else [d.id for d in corpus.documents]
    keywords = {d: corpus_mod.tfidf_keywords(corpus, d, k) for d in doc_ids}
    out_dir = _out_dir(out)
    out_path = out_dir / "keywords.json"
    _write_json(out_path, keywords)
    _write_manifest(out_dir, "tfidf", {"doc_id": doc_id, "k": k, "paths": paths}, paths, [out_path])
    return {"n_documents": len(doc_ids), "k": k}


# ---------------------------------------------------------------------------
# embedding tasks


def _read_texts_jsonl(path: str) -> list[tuple[str, str]]:
    texts = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed JSON at line {lineno} of {path}: {exc}") from exc
            if "id" not in obj or "text" not in obj:
                raise DataError(f"missing id/text at line {lineno} of {path}")
            texts.append((str(obj["id"]), str(obj["text"])))
    return texts


def run_embed_fetch(
    texts_path: str,
    endpoint: str,
    model: str,
    out: str,
    batch_size: int = 32,
    normalize: bool = True,
    pooling: str = "mean",
    api_key: str | None = None,
    transport=None,
) -> dict:
    texts = _read_texts_jsonl(texts_path)
    store = embedstore.fetch_embeddings(
        endpoint, model, texts, batch_size=batch_size, normalize=normalize,
        pooling=pooling, api_key=api_key, transport=transport,
    )
    out_dir = _out_dir(out)
    store_path = out_dir / "embeddings.emb"
    embedstore.write_store(store, store_path)
    config = {"endpoint": endpoint, "model": model, "batch_size": batch_size,
              "normalize": normalize, "pooling": pooling}
    _write_manifest(out_dir, "embed-fetch", config, {"texts": texts_path}, [store_path])
    return {"count": len(store), "dim": store.dim, "store": str(store_path)}


def run_knn(
    store_path: str,
    out: str,
    k: int = RETRIEVAL_K,
    query_store_path: str | None = None,
    query_ids: list[str] | None = None,
) -> dict:
    store = embedstore.read_store(store_path)
    query_store = embedstore.read_store(query_store_path) if query_store_path else store
    ids = query_ids if query_ids is not None else list(query_store.ids)
    results = {}
    for qid in ids:
        neighbors = embedstore.knn(store, query_store.row(qid), k)
        results[qid] = [{"id": n.id, "score": n.score} for n in neighbors]
    out_dir = _out_dir(out)
    out_path = out_dir / "neighbors.json"
    _write_json(out_path, results)
    inputs = {"store": store_path}
    if query_store_path:
        inputs["query_store"] = query_store_path
    _write_manifest(out_dir, "knn", {"k": k}, inputs, [out_path])
    return {"n_queries": len(ids), "k": k}


# ---------------------------------------------------------------------------
# prompting tasks


def run_prompt_a(
    paths: dict,
    train_store_path: str,
    test_documents_path: str,
    test_store_path: str,
    out: str,
    method: str = "m2",
    endpoint: str | None = None,
    model: str = "default",
    temperature: float = 0.0,
    api_key: str | None = None,
    transport=None,
) -> dict:
    """Task A: retrieval-augmented extraction of terms and types for every
    test document, aggregated into terms.txt and types.txt."""
    corpus = _load_corpus_from_paths(paths)
    index = corpus_mod.repair_term_doc_index(corpus)
    train_store = embedstore.read_store(train_store_path)
    test_store = embedstore.read_store(test_store_path)
    test_docs = _read_texts_jsonl(test_documents_path)

    results = []
    records = []
    total_skipped = 0
    for doc_id, text in test_docs:
        neighbors = embedstore.knn(train_store, test_store.row(doc_id), RETRIEVAL_K)
        test_doc = corpus_mod.Document(id=doc_id, title="", text=text)
        prompt, skipped = fewshot.build_prompt_taskA(
            test_doc, [n.id for n in neighbors], method, corpus, index
        )
        total_skipped += skipped
        raw = fewshot.complete(prompt, endpoint, model=model, temperature=temperature,
                               api_key=api_key, transport=transport)
        parsed = fewshot.parse_structured_output(raw, fewshot.Schema.terms_and_types)
        results.append(parsed)
        records.append({"doc_id": doc_id, "terms": parsed.terms, "types": parsed.types,
                        "neighbors": [n.id for n in neighbors]})
    aggregated = fewshot.aggregate_results(results)

    out_dir = _out_dir(out)
    terms_path, types_path = out_dir / "terms.txt", out_dir / "types.txt"
    records_path = out_dir / "extractions.jsonl"
    _write_lines(terms_path, aggregated.terms)
    _write_lines(types_path, aggregated.types)
    with open(records_path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    config = {"method": method, "endpoint": endpoint or "mock", "model": model,
              "temperature": temperature}
    inputs = dict(paths)
    inputs.update({"train_store": train_store_path, "test_documents": test_documents_path,
                   "test_store": test_store_path})
    _write_manifest(out_dir, "prompt-a", config, inputs, [terms_path, types_path, records_path])
    return {"n_documents": len(test_docs), "n_terms": len(aggregated.terms),
            "n_types": len(aggregated.types), "skipped_demos": total_skipped}


def run_prompt_b(
    terms2types_path: str,
    train_store_path: str,
    test_terms_path: str,
    test_store_path: str,
    out: str,
    endpoint: str | None = None,
    model: str = "default",
    temperature: float = 0.0,
    api_key: str | None = None,
    transport=None,
) -> dict:
    """Task B few-shot: type every test term using retrieved exemplars."""
    raw = json.loads(Path(terms2types_path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise DataError(f"{terms2types_path}: expected a JSON object")
    term_to_types = {str(k): {str(v) for v in vals} for k, vals in raw.items()}
    train_store = embedstore.read_store(train_store_path)
    test_store = embedstore.read_store(test_store_path)
    test_terms = [line.strip() for line in Path(test_terms_path).read_text(encoding="utf-8").splitlines()
                  if line.strip()]

    out_dir = _out_dir(out)
    pred_path = out_dir / "typing.jsonl"
    n_pred = 0
    with open(pred_path, "w", encoding="utf-8") as fh:
        for term in test_terms:
            neighbors = embedstore.knn(train_store, test_store.row(term), RETRIEVAL_K)
            exemplars = [(n.id, term_to_types.get(n.id, set())) for n in neighbors
                         if n.id in term_to_types]
            prompt = fewshot.build_prompt_taskB(term, exemplars)
            raw_out = fewshot.complete(prompt, endpoint, model=model, temperature=temperature,
                                       api_key=api_key, transport=transport)
            parsed = fewshot.parse_structured_output(raw_out, fewshot.Schema.types_only)
            fh.write(json.dumps({"term": term, "types": parsed.types}, ensure_ascii=False) + "\n")
            n_pred += 1
    config = {"endpoint": endpoint or "mock", "model": model, "temperature": temperature}
    inputs = {"terms2types": terms2types_path, "train_store": train_store_path,
              "test_terms": test_terms_path, "test_store": test_store_path}
    _write_manifest(out_dir, "prompt-b", config, inputs, [pred_path])
    return {"n_terms": n_pred}


# ---------------------------------------------------------------------------
# zero-shot tasks


def _write_predictions(out_dir: Path, preds: list[dict]) -> Path:
    path = out_dir / "predictions.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for pred in preds:
            fh.write(json.dumps(pred, ensure_ascii=False) + "\n")
    return path


def run_zeroshot(term_store_path: str, type_store_path: str, out: str) -> dict:
    """Single-model zero-shot typing: argmax cosine against candidate types."""
    term_store = embedstore.read_store(term_store_path)
    type_store = embedstore.read_store(type_store_path)
    preds = []
    for term, vec in zip(term_store.ids, term_store.matrix):
        prediction = zeroshot.cosine_classify(term, vec, type_store)
        preds.append({"term": term, "types": prediction.predicted})
    out_dir = _out_dir(out)
    pred_path = _write_predictions(out_dir, preds)
    inputs = {"term_store": term_store_path, "type_store": type_store_path}
    _write_manifest(out_dir, "zeroshot", {}, inputs, [pred_path])
    return {"n_terms": len(preds)}


def run_ensemble(
    member_paths: list[dict],
    out: str,
    temperature: float = 1.0,
) -> dict:
    """Entropy-weighted ensemble; members are {"name", "term_store", "type_store"}."""
    if not member_paths:
        raise ConfigError("at least one ensemble member required")
    members = []
    for spec in member_paths:
        for key in ("name", "term_store", "type_store"):
            if key not in spec:
                raise ConfigError(f"ensemble member missing {key!r}")
        members.append((
            spec["name"],
            embedstore.read_store(spec["term_store"]),
            embedstore.read_store(spec["type_store"]),
        ))
    term_ids = members[0][1].ids
    type_ids = members[0][2].ids
    for name, term_store, type_store in members[1:]:
        if term_store.ids != term_ids or type_store.ids != type_ids:
            raise DataError(f"member {name!r} stores do not align with the first member")
    preds = []
    for i, term in enumerate(term_ids):
        scored = []
        for name, term_store, type_store in members:
            sims = zeroshot.cosine_classify(term, term_store.matrix[i], type_store).scores
            scored.append(zeroshot.member_predict(name, type_ids, sims, temperature))
        prediction = zeroshot.ensemble_predict(term, scored)
        preds.append({"term": term, "types": prediction.predicted})
    out_dir = _out_dir(out)
    pred_path = _write_predictions(out_dir, preds)
    inputs = {}
    for spec in member_paths:
        inputs[f"{spec['name']}_terms"] = spec["term_store"]
        inputs[f"{spec['name']}_types"] = spec["type_store"]
    _write_manifest(out_dir, "ensemble", {"temperature": temperature}, inputs, [pred_path])
    return {"n_terms": len(preds), "n_members": len(members)}


def run_distmult(term_store_path: str, type_store_path: str, out: str, tau: float = 1.0) -> dict:
    """DistMult dot-product scoring with z-score multi-type selection."""
    term_store = embedstore.read_store(term_store_path)
    type_store = embedstore.read_store(type_store_path)
    preds = []
    for term, vec in zip(term_store.ids, term_store.matrix):
        scores = zeroshot.distmult_scores(vec, type_store)
        chosen = zeroshot.zscore_select(scores, tau)
        preds.append({"term": term, "types": [type_store.ids[i] for i in chosen]})
    out_dir = _out_dir(out)
    pred_path = _write_predictions(out_dir, preds)
    inputs = {"term_store": term_store_path, "type_store": type_store_path}
    _write_manifest(out_dir, "distmult", {"tau": tau}, inputs, [pred_path])
    return {"n_terms": len(preds)}


# ---------------------------------------------------------------------------
# taxonomy tasks


def _load_taxonomy(types_path: str, edges_path: str) -> taxo.TaxonomyGraph:
    types = [line.strip() for line in Path(types_path).read_text(encoding="utf-8").splitlines()
             if line.strip()]
    return taxo.TaxonomyGraph.from_edge_names(types, _read_edge_file(edges_path))


def _train_config_from_dict(params: dict) -> taxo.TrainConfig:
    try:
        return taxo.TrainConfig(**params)
    except TypeError as exc:
        raise ConfigError(f"bad training config: {exc}") from exc


def run_taxo_train(
    types_path: str,
    edges_path: str,
    store_path: str,
    out: str,
    config: dict,
    split_ratio: float = 0.8,
    split_seed: int = 0,
) -> dict:
    graph = _load_taxonomy(types_path, edges_path)
    store = embedstore.read_store(store_path)
    train_config = _train_config_from_dict(config)
    train_g, val_g, dropped = taxo.split_types(graph, ratio=split_ratio, seed=split_seed)
    result = taxo.train(train_g, store, train_config, val_graph=val_g)
    out_dir = _out_dir(out)
    ckpt_path = out_dir / "head.ckpt"
    taxo.save_head(result.head, ckpt_path, config=config)
    history_path = out_dir / "history.json"
    _write_json(history_path, {
        "history": [{"epoch": s.epoch, "loss": s.loss, "val_auc": s.val_auc} for s in result.history],
        "best_epoch": result.best_epoch,
        "best_val_auc": result.best_val_auc,
        "pos_weight": result.pos_weight,
        "dropped_edges": dropped,
        "train_density": train_g.density(),
    })
    inputs = {"types": types_path, "edges": edges_path, "store": store_path}
    run_config = {"config": config, "split_ratio": split_ratio, "split_seed": split_seed}
    _write_manifest(out_dir, "taxo-train", run_config, inputs, [ckpt_path, history_path])
    return {"best_epoch": result.best_epoch, "best_val_auc": result.best_val_auc,
            "train_density": train_g.density(), "checkpoint": str(ckpt_path)}


def run_taxo_grid(
    types_path: str,
    edges_path: str,
    store_path: str,
    out: str,
    configs: list[dict],
    split_ratio: float = 0.8,
    split_seed: int = 0,
) -> dict:
    graph = _load_taxonomy(types_path, edges_path)
    store = embedstore.read_store(store_path)
    train_configs = [_train_config_from_dict(c) for c in configs]
    best_config, result, leaderboard = taxo.grid_search(
        graph, store, train_configs, split_ratio=split_ratio, split_seed=split_seed
    )
    out_dir = _out_dir(out)
    ckpt_path = out_dir / "head.ckpt"
    best_params = configs[train_configs.index(best_config)]
    taxo.save_head(result.head, ckpt_path, config=best_params)
    board_path = out_dir / "leaderboard.json"
    _write_json(board_path, [
        {"config": configs[i], "val_auc": auc} for i, (_, auc) in enumerate(leaderboard)
    ])
    inputs = {"types": types_path, "edges": edges_path, "store": store_path}
    run_config = {"configs": configs, "split_ratio": split_ratio, "split_seed": split_seed}
    _write_manifest(out_dir, "taxo-grid", run_config, inputs, [ckpt_path, board_path])
    return {"best_config": best_params, "best_val_auc": result.best_val_auc,
            "checkpoint": str(ckpt_path)}


def run_taxo_predict(
    checkpoint_path: str,
    store_path: str,
    out: str,
    threshold: float | None = None,
    train_density: float | None = None,
) -> dict:
    """Predict the test taxonomy from a trained head: either a fixed decision
    threshold or sparsity matching against the training-graph edge density."""
    if (threshold is None) == (train_density is None):
        raise ConfigError("provide exactly one of threshold or train_density")
    head, _ = taxo.load_head(checkpoint_path)
    store = embedstore.read_store(store_path)
    if train_density is not None:
        n = len(store.ids)
        top_k = taxo.sparsity_matched_k(train_density, n * n)
        graph = taxo.predict_taxonomy(head, store, top_k=top_k)
    else:
        graph = taxo.predict_taxonomy(head, store, threshold=threshold)
    out_dir = _out_dir(out)
    edges_path = out_dir / "predicted_edges.json"
    _write_edge_file(edges_path, graph.edge_names())
    config = {"threshold": threshold, "train_density": train_density}
    inputs = {"checkpoint": checkpoint_path, "store": store_path}
    _write_manifest(out_dir, "taxo-predict", config, inputs, [edges_path])
    return {"n_edges": len(graph.edges)}


# ---------------------------------------------------------------------------
# evaluation


def run_eval(predicted_path: str, gold_path: str, out: str, kind: str = "sets",
             dataset: str = "dataset") -> dict:
    """Score predictions against gold. kind "sets" compares one entry per
    line files; "edges" compares taxonomy edge files."""
    if kind == "sets":
        pred = {line.strip() for line in Path(predicted_path).read_text(encoding="utf-8").splitlines()
                if line.strip()}
        gold = {line.strip() for line in Path(gold_path).read_text(encoding="utf-8").splitlines()
                if line.strip()}
        prf = evaluate.set_prf(pred, gold)
    elif kind == "edges":
        pred_edges = set(_read_edge_file(predicted_path))
        gold_edges = set(_read_edge_file(gold_path))
        prf = evaluate.edge_prf(pred_edges, gold_edges)
    else:
        raise ConfigError(f"unknown eval kind {kind!r}")
    row = {"dataset": dataset, "metric": kind, "precision": prf.precision,
           "recall": prf.recall, "f1": prf.f1}
    out_dir = _out_dir(out)
    report_path = out_dir / "report.json"
    _write_json(report_path, [row])
    table_path = out_dir / "report.txt"
    header = f"{'dataset':<20} {'metric':<8} {'precision':>9} {'recall':>9} {'f1':>9}"
    line = (f"{row['dataset']:<20} {row['metric']:<8} {row['precision']:>9.4f} "
            f"{row['recall']:>9.4f} {row['f1']:>9.4f}")
    table_path.write_text(header + "\n" + line + "\n", encoding="utf-8")
    inputs = {"predicted": predicted_path, "gold": gold_path}
    _write_manifest(out_dir, "eval", {"kind": kind, "dataset": dataset}, inputs,
                    [report_path, table_path])
    return row
