"""Exception types shared across the package."""


class GwmatchError(Exception):
    """Base class for all package-specific errors."""


class GraphParseError(GwmatchError):
    """Raised when an edge-list or correspondence file cannot be parsed."""


class EmptyGraphError(GwmatchError):
    """Raised when an input graph has no nodes."""


class NonpositiveWeightError(GraphParseError):
    """Raised for edges whose weight is zero, negative, or non-finite."""


class ShapeMismatchError(GwmatchError):
    """Raised when matrix or vector dimensions are inconsistent."""


class NonFiniteError(GwmatchError):
    """Raised when scaling cannot be stabilized (regularization too small).

    Carries the partial solver trace when one is available so callers can
    inspect how far the run got.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class DivergedError(GwmatchError):
    """Raised when the embedding optimizer blows past its divergence guard."""


class ZeroVectorError(GwmatchError):
    """Raised when the cosine kernel meets an all-zero embedding column."""
