"""Exception types raised by the toolkit.

Each class maps to one failure family so that callers (and the CLI,
which turns them into distinct exit codes) can react precisely.
"""


class ImcatError(Exception):
    """Base class for all toolkit errors."""


class IoError(ImcatError):
    """Unreadable, corrupt or missing input file."""


class UnimodalError(ImcatError):
    """Histogram has fewer than two modes; no valley threshold exists."""


class TooSmallError(ImcatError):
    """Image too small for the requested operation."""


class NotBinaryError(ImcatError):
    """A two-valued image was required but a third value is present."""


class DimensionMismatchError(ImcatError):
    """Operands do not share the required dimensions or arity."""


class UnframedError(ImcatError):
    """A border pixel lies on the object side of the threshold."""


class CycleOverflowError(ImcatError):
    """More contour cycles than the configured maximum."""


class UnbalancedError(ImcatError):
    """A row transition chain has an odd transition count."""


class BrokenContourError(ImcatError):
    """Contour tracing left unconsumed pixels (8-connected-only neck)."""


class EmptyObjectError(ImcatError):
    """Operation on an object with no pixels."""


class EmptyListError(ImcatError):
    """Operation on an empty value list."""


class TooFewPointsError(ImcatError):
    """Not enough points for the requested fit or approximation."""


class ZeroLengthError(ImcatError):
    """Chord endpoints coincide."""


class RankDeficientError(ImcatError):
    """Design matrix is not of full column rank."""


class SingularCovarianceError(ImcatError):
    """Covariance matrix not invertible."""


class EmptyClassError(ImcatError):
    """A class has no training samples."""


class SchemaMismatchError(ImcatError):
    """Record does not match the archive attribute schema."""


class IdOutOfRangeError(ImcatError):
    """Object id outside the archive."""


class EmptySelectionError(ImcatError):
    """No attribute dimensions selected."""


class InvalidIntervalError(ImcatError):
    """Query interval with lower bound above upper bound."""


class ShapeMismatchError(ImcatError):
    """Trees of different dimension or depth combined."""


class OutOfRangeError(ImcatError):
    """Value outside the covered lookup range."""


class EmptyHistogramError(ImcatError):
    """Histogram contains no counts."""


class EmptyMaskError(ImcatError):
    """Calibration mask selects no pixels."""


class DegenerateError(ImcatError):
    """Degenerate statistics (e.g. both dispersions zero)."""


class NotInvertibleError(ImcatError):
    """Transform is not invertible over the requested footprint."""


class MissingImageError(ImcatError):
    """No image available for the requested rendering."""
