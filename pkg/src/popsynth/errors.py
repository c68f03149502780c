"""Exception hierarchy shared across the toolkit."""


class PopsynthError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(PopsynthError):
    """Data does not conform to a categorical schema (unknown label, bad index)."""


class FormatError(PopsynthError):
    """Malformed input file (ragged CSV rows, truncated checkpoint, bad JSON)."""


class ValidationError(PopsynthError):
    """Operation argument outside its documented domain."""


class DecodeError(PopsynthError):
    """Encoded block cannot be mapped back to a category (e.g. all-zero block)."""


class NumericError(PopsynthError):
    """A tensor operation produced a non-finite value."""


class GraphError(PopsynthError):
    """Autodiff graph misuse (non-scalar backward target, detached tensor)."""


class TrainingDivergedError(PopsynthError):
    """Training produced a non-finite loss term."""

    def __init__(self, epoch, term, message=None):
        self.epoch = epoch
        self.term = term
        super().__init__(message or f"training diverged at epoch {epoch} in term {term!r}")


class CheckpointError(PopsynthError):
    """Checkpoint incompatible with the requested schema or corrupted."""


class UndefinedMetricError(PopsynthError):
    """Metric has no defined value for these inputs (zero denominator etc.)."""
