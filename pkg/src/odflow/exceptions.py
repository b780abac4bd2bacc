"""Exception hierarchy for the odflow package."""


class OdflowError(Exception):
    """Base class for all package-specific errors."""


class InvalidBoundsError(OdflowError):
    """Bounding box or grid construction parameters are invalid."""


class OutOfBoundsError(OdflowError):
    """A coordinate lies outside the grid's bounding box."""


class VocabularyError(OdflowError):
    """Unknown category name or malformed vocabulary definition."""


class DatasetError(OdflowError):
    """Malformed trip or origin data."""


class EmptyDatasetError(DatasetError):
    """An ingest or export step produced zero usable records."""


class PredictorError(OdflowError):
    """Base class for failures while producing a prediction."""


class ResponseParseError(PredictorError):
    """A model response did not match the expected output grammar.

    Carries the raw response text so callers can log or inspect it.
    """

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class TransportError(PredictorError):
    """The prediction endpoint could not be reached or answered abnormally."""


class MetricError(OdflowError):
    """A metric is undefined for the given inputs (e.g. two empty matrices)."""


class PipelineAbortError(OdflowError):
    """The pipeline stopped because the error budget was exceeded.

    ``index`` is the position of the origin entry whose prediction failed.
    """

    def __init__(self, message: str, index: int, cause: Exception | None = None):
        super().__init__(message)
        self.index = index
        self.cause = cause


class ConfigError(OdflowError):
    """A run configuration file is missing, unreadable, or inconsistent."""
