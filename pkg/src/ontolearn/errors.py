"""Exception hierarchy shared across the toolkit.

The three leaf classes map onto the CLI exit codes: config errors exit 1,
data errors exit 2, service errors exit 3.
"""


class OntolearnError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(OntolearnError):
    """Invalid run configuration (bad field, missing path, bad parameter)."""


class DataError(OntolearnError):
    """Malformed or inconsistent input data (files, stores, graphs)."""


class ServiceError(OntolearnError):
    """A remote embeddings/chat service failed or misbehaved."""

    def __init__(self, message: str, attempts: int = 1, batch_index: int | None = None):
        super().__init__(message)
        self.attempts = attempts
        self.batch_index = batch_index
