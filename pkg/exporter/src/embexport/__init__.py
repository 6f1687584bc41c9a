"""Batch export of sentence embeddings into EMBSTOR1 store files."""

__version__ = "0.1.0"
