"""FastAPI service exposing the pipeline runners.

Every endpoint takes file paths plus task parameters, runs the corresponding
pipeline step, and returns its summary.  Errors are reported as structured
JSON with a kind ("config", "data", or "service") that clients map to exit
codes.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, pipeline
from ..errors import ConfigError, DataError, OntolearnError, ServiceError
from . import schemas

app = FastAPI(title="ontolearn", version=__version__)


@app.exception_handler(OntolearnError)
async def ontolearn_error_handler(request: Request, exc: OntolearnError):
    if isinstance(exc, ConfigError):
        kind, status = "config", 400
    elif isinstance(exc, ServiceError):
        kind, status = "service", 502
    elif isinstance(exc, DataError):
        kind, status = "data", 422
    else:
        kind, status = "data", 422
    return JSONResponse(status_code=status, content={"kind": kind, "message": str(exc)})


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/corpus/repair", response_model=schemas.RunResponse)
def corpus_repair(req: schemas.RepairRequest):
    result = pipeline.run_repair(req.paths.as_dict(), req.out)
    return {"task": "repair", "result": result}


@app.post("/corpus/tfidf", response_model=schemas.RunResponse)
def corpus_tfidf(req: schemas.TfidfRequest):
    result = pipeline.run_tfidf(req.paths.as_dict(), req.out, doc_id=req.doc_id, k=req.k)
    return {"task": "tfidf", "result": result}


@app.post("/embeddings/fetch", response_model=schemas.RunResponse)
def embeddings_fetch(req: schemas.EmbedFetchRequest):
    result = pipeline.run_embed_fetch(
        req.texts, req.endpoint, req.model, req.out,
        batch_size=req.batch_size, normalize=req.normalize,
        pooling=req.pooling, api_key=req.api_key,
    )
    return {"task": "embed-fetch", "result": result}


@app.post("/embeddings/knn", response_model=schemas.RunResponse)
def embeddings_knn(req: schemas.KnnRequest):
    result = pipeline.run_knn(
        req.store, req.out, k=req.k,
        query_store_path=req.query_store, query_ids=req.query_ids,
    )
    return {"task": "knn", "result": result}


@app.post("/prompts/task-a", response_model=schemas.RunResponse)
def prompts_task_a(req: schemas.PromptARequest):
    result = pipeline.run_prompt_a(
        req.paths.as_dict(), req.train_store, req.test_documents, req.test_store,
        req.out, method=req.method, endpoint=req.endpoint, model=req.model,
        temperature=req.temperature, api_key=req.api_key,
    )
    return {"task": "prompt-a", "result": result}


@app.post("/prompts/task-b", response_model=schemas.RunResponse)
def prompts_task_b(req: schemas.PromptBRequest):
    result = pipeline.run_prompt_b(
        req.terms2types, req.train_store, req.test_terms, req.test_store,
        req.out, endpoint=req.endpoint, model=req.model,
        temperature=req.temperature, api_key=req.api_key,
    )
    return {"task": "prompt-b", "result": result}


@app.post("/zeroshot/cosine", response_model=schemas.RunResponse)
def zeroshot_cosine(req: schemas.ZeroshotRequest):
    result = pipeline.run_zeroshot(req.term_store, req.type_store, req.out)
    return {"task": "zeroshot", "result": result}


@app.post("/zeroshot/ensemble", response_model=schemas.RunResponse)
def zeroshot_ensemble(req: schemas.EnsembleRequest):
    result = pipeline.run_ensemble(
        [m.model_dump() for m in req.members], req.out, temperature=req.temperature
    )
    return {"task": "ensemble", "result": result}


@app.post("/zeroshot/distmult", response_model=schemas.RunResponse)
def zeroshot_distmult(req: schemas.DistmultRequest):
    result = pipeline.run_distmult(req.term_store, req.type_store, req.out, tau=req.tau)
    return {"task": "distmult", "result": result}


@app.post("/taxonomy/train", response_model=schemas.RunResponse)
def taxonomy_train(req: schemas.TaxoTrainRequest):
    result = pipeline.run_taxo_train(
        req.types, req.edges, req.store, req.out, req.config,
        split_ratio=req.split_ratio, split_seed=req.split_seed,
    )
    return {"task": "taxo-train", "result": result}


@app.post("/taxonomy/grid", response_model=schemas.RunResponse)
def taxonomy_grid(req: schemas.TaxoGridRequest):
    result = pipeline.run_taxo_grid(
        req.types, req.edges, req.store, req.out, req.configs,
        split_ratio=req.split_ratio, split_seed=req.split_seed,
    )
    return {"task": "taxo-grid", "result": result}


@app.post("/taxonomy/predict", response_model=schemas.RunResponse)
def taxonomy_predict(req: schemas.TaxoPredictRequest):
    result = pipeline.run_taxo_predict(
        req.checkpoint, req.store, req.out,
        threshold=req.threshold, train_density=req.train_density,
    )
    return {"task": "taxo-predict", "result": result}


@app.post("/evaluate", response_model=schemas.RunResponse)
def evaluate_predictions(req: schemas.EvalRequest):
    result = pipeline.run_eval(req.predicted, req.gold, req.out,
                               kind=req.kind, dataset=req.dataset)
    return {"task": "eval", "result": result}
