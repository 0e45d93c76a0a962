"""Exception hierarchy shared across the pipeline."""


class CascadeError(Exception):
    """Base class for all textcascade errors."""


class InputError(CascadeError):
    """Malformed or unreadable input data."""


class EmptyInputError(InputError):
    """Input decoded fine but produced zero usable rows."""


class TaxonomyError(CascadeError):
    """A record's domain cannot be mapped to any node."""


class SplitError(CascadeError):
    """Requested chronological split would leave an empty side."""


class TransportError(CascadeError):
    """HTTP-level failure talking to a generation or embedding backend."""

    def __init__(self, message, status=None, body_excerpt=None):
        super().__init__(message)
        self.status = status
        self.body_excerpt = body_excerpt


class DegenerateOutputError(CascadeError):
    """Backend returned an empty or whitespace-only completion."""


class DegenerateEmbeddingError(CascadeError):
    """An embedding (or embedding centroid) has zero norm."""


class RateExtinctionError(CascadeError):
    """Total intensity decayed below resolution with no background rate."""


class NoStableModelError(CascadeError):
    """No decay value on the grid produced a subcritical fit.

    Carries the full list of per-decay fit results so callers can report
    the grid anyway.
    """

    def __init__(self, message, results):
        super().__init__(message)
        self.results = results
