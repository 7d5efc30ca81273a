"""Exception hierarchy shared by all modules."""


class GSTUnlearnError(Exception):
    """Base class for every error raised by this package."""


class ParseError(GSTUnlearnError, ValueError):
    """A dataset file line could not be parsed."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class StructuralError(GSTUnlearnError, ValueError):
    """Graph structure is inconsistent (asymmetric edges, bad indices)."""


class DegenerateGraphError(GSTUnlearnError, ValueError):
    """An edit would leave a graph with no nodes."""


class ParameterError(GSTUnlearnError, ValueError):
    """An argument is outside its admissible range."""


class LabelError(GSTUnlearnError, ValueError):
    """Labels are not in {-1, +1} where a binary model is required."""


class CacheError(GSTUnlearnError):
    """A power cache cannot serve the requested filter family."""


class UnsupportedPathError(GSTUnlearnError):
    """The incremental path does not apply; recompute from scratch instead."""


class StaleRequestError(GSTUnlearnError):
    """A removal request targets data that is already gone."""


class BatchPreconditionError(GSTUnlearnError, ValueError):
    """Batch removal needs m < min_i g_i."""


class BoundViolationError(GSTUnlearnError, AssertionError):
    """A residual bound was exceeded by the true residual."""

    def __init__(self, message, instance=None):
        self.instance = instance
        super().__init__(message)
