"""Pydantic request/response models for the pipeline service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class CorpusPaths(BaseModel):
    documents: str
    terms: str
    types: str
    terms2types: str | None = None
    terms2docs: str | None = None

    def as_dict(self) -> dict:
        paths = {"documents": self.documents, "terms": self.terms, "types": self.types}
        if self.terms2types:
            paths["terms2types"] = self.terms2types
        if self.terms2docs:
            paths["terms2docs"] = self.terms2docs
        return paths


class RepairRequest(BaseModel):
    paths: CorpusPaths
    out: str


class TfidfRequest(BaseModel):
    paths: CorpusPaths
    out: str
    doc_id: str | None = None
    k: int = Field(default=20, ge=1)


class EmbedFetchRequest(BaseModel):
    texts: str
    endpoint: str
    model: str
    out: str
    batch_size: int = Field(default=32, ge=1)
    normalize: bool = True
    pooling: str = "mean"
    api_key: str | None = None


class KnnRequest(BaseModel):
    store: str
    out: str
    k: int = Field(default=3, ge=1)
    query_store: str | None = None
    query_ids: list[str] | None = None


class PromptARequest(BaseModel):
    paths: CorpusPaths
    train_store: str
    test_documents: str
    test_store: str
    out: str
    method: str = "m2"
    endpoint: str | None = None
    model: str = "default"
    temperature: float = 0.0
    api_key: str | None = None


class PromptBRequest(BaseModel):
    terms2types: str
    train_store: str
    test_terms: str
    test_store: str
    out: str
    endpoint: str | None = None
    model: str = "default"
    temperature: float = 0.0
    api_key: str | None = None


class ZeroshotRequest(BaseModel):
    term_store: str
    type_store: str
    out: str


class EnsembleMember(BaseModel):
    name: str
    term_store: str
    type_store: str


class EnsembleRequest(BaseModel):
    members: list[EnsembleMember]
    out: str
    temperature: float = 1.0


class DistmultRequest(BaseModel):
    term_store: str
    type_store: str
    out: str
    tau: float = 1.0


class TaxoTrainRequest(BaseModel):
    types: str
    edges: str
    store: str
    out: str
    config: dict = Field(default_factory=dict)
    split_ratio: float = 0.8
    split_seed: int = 0


class TaxoGridRequest(BaseModel):
    types: str
    edges: str
    store: str
    out: str
    configs: list[dict]
    split_ratio: float = 0.8
    split_seed: int = 0


class TaxoPredictRequest(BaseModel):
    checkpoint: str
    store: str
    out: str
    threshold: float | None = None
    train_density: float | None = None


class EvalRequest(BaseModel):
    predicted: str
    gold: str
    out: str
    kind: str = "sets"
    dataset: str = "dataset"


class RunResponse(BaseModel):
    task: str
    result: dict


class ErrorResponse(BaseModel):
    kind: str
    message: str
