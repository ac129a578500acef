"""Exception types raised across the package.

Every error the public API raises deliberately derives from ``BotuqError``
so callers (and the CLI) can catch one base class.
"""


class BotuqError(Exception):
    """Base class for all package-specific errors."""


class MissingLabelColumn(BotuqError):
    """CSV header is absent or its last column is not named 'label'."""


class FeatureCountMismatch(BotuqError):
    def __init__(self, expected: int, found: int):
        super().__init__(f"expected {expected} feature columns, found {found}")
        self.expected = expected
        self.found = found


class NonBinaryLabel(BotuqError):
    def __init__(self, row: int, value: str):
        super().__init__(f"row {row}: label {value!r} is not 0 or 1")
        self.row = row
        self.value = value


class UnparseableValue(BotuqError):
    def __init__(self, row: int, column: str, detail: str = "not a finite number"):
        super().__init__(f"row {row}, column {column!r}: {detail}")
        self.row = row
        self.column = column


class NonFiniteFeature(BotuqError):
    """A feature matrix handed directly to Dataset contains NaN/inf."""


class DatasetTooSmall(BotuqError):
    pass


class StatsLengthMismatch(BotuqError):
    pass


class InvalidSpec(BotuqError):
    """Synthetic generator parameters out of range."""


class FeatureLengthMismatch(BotuqError):
    """Input row length differs from the feature count a model was built for."""


class EmptyDataset(BotuqError):
    pass


class SingleMember(BotuqError):
    """An operation needs at least two member distributions."""


class InvalidT(BotuqError):
    pass


class InvalidK(BotuqError):
    pass


class BadIndex(BotuqError):
    pass


class EmptyResult(BotuqError):
    """An operation would leave no rows behind."""


class LengthMismatch(BotuqError):
    pass


class EmptyMatrix(BotuqError):
    pass


class IoError(BotuqError):
    """Filesystem read/write failure wrapped with context."""
