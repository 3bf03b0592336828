"""Exception hierarchy shared across the package.

Every error raised on a contract violation derives from
:class:`RecoverycastError` so callers can catch domain failures without
swallowing programming errors.
"""


class RecoverycastError(Exception):
    """Base class for all domain errors."""


# --- series ---------------------------------------------------------------

class AllMissing(RecoverycastError):
    """Series has fewer than two present values; nothing to smooth."""


class OutOfRange(RecoverycastError):
    """A month boundary falls outside the series span."""


class SchemaError(RecoverycastError):
    """Malformed CSV row. Carries the 1-based row number."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"{message} (row {row})" if row is not None else message)


class DuplicateObservation(RecoverycastError):
    """Two rows for the same (destination, month)."""


# --- models ---------------------------------------------------------------

class SeriesTooShort(RecoverycastError):
    pass


class NonConvergence(RecoverycastError):
    """Optimizer failure; carries the model family and diagnostics."""

    def __init__(self, family: str, detail: str = ""):
        self.family = family
        self.detail = detail
        super().__init__(f"{family}: {detail}" if detail else family)


class NonPositiveValue(RecoverycastError):
    """Multiplicative decomposition requires strictly positive values."""


class InsufficientHistory(RecoverycastError):
    pass


# --- hierarchy ------------------------------------------------------------

class MalformedTree(RecoverycastError):
    pass


class BadProportions(RecoverycastError):
    pass


class SingularW(RecoverycastError):
    """Covariance not invertible even after shrinkage."""


class ShapeMismatch(RecoverycastError):
    pass


# --- combine --------------------------------------------------------------

class EmptyTable(RecoverycastError):
    pass


class DegenerateDesign(RecoverycastError):
    """A forecast column is identically zero; weights are not identifiable."""


class ModelSetMismatch(RecoverycastError):
    pass


# --- signals --------------------------------------------------------------

class InsufficientOverlap(RecoverycastError):
    pass


class NoKeywordPasses(RecoverycastError):
    """No keyword clears the correlation threshold."""


class ZeroIndex(RecoverycastError):
    pass


class NoFlightData(RecoverycastError):
    pass


class NoSignal(RecoverycastError):
    """Neither index nor flight branch is available."""


# --- recovery -------------------------------------------------------------

class DegenerateX(RecoverycastError):
    pass


class MissingMonth(RecoverycastError):
    pass


class IllConditioned(RecoverycastError):
    pass


class NonPositiveTrend(RecoverycastError):
    pass


class NoBounds(RecoverycastError):
    """No contributing model produces prediction intervals."""


# --- evaluation -----------------------------------------------------------

class ZeroScale(RecoverycastError):
    pass


class BadInterval(RecoverycastError):
    pass


class ZeroMeanActual(RecoverycastError):
    pass


class LengthMismatch(RecoverycastError):
    pass


class NoOverlap(RecoverycastError):
    pass


# --- pipeline -------------------------------------------------------------

class ConfigError(RecoverycastError):
    pass


class StageError(RecoverycastError):
    """Fatal stage failure. Carries stage name and, when known, destination."""

    def __init__(self, stage: str, message: str, destination: str | None = None):
        self.stage = stage
        self.destination = destination
        where = f"{stage}[{destination}]" if destination else stage
        super().__init__(f"{where}: {message}")
