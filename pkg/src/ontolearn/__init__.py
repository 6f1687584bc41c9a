"""Ontology-learning toolkit: corpus repair, embedding retrieval, few-shot
and zero-shot term typing, and cross-attention taxonomy discovery."""

__version__ = "0.1.0"
