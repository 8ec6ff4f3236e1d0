"""メタラーナー共通の例外クラス"""


class MetaLearnerError(Exception):
    """Base class for every error raised by the meta_learners package."""


class InvalidInput(MetaLearnerError, ValueError):
    pass


class InsufficientData(MetaLearnerError):
    """Too few rows for a fit. ``role`` names the component being fitted, when known."""

    def __init__(self, message, role=None):
        super().__init__(message)
        self.role = role


class EmptyTreatmentArm(InsufficientData):
    pass


class ExtremePropensity(MetaLearnerError):
    pass


class DegenerateResidualTreatment(MetaLearnerError):
    pass


class FoldTooSmall(MetaLearnerError):
    def __init__(self, fold, role, cause=None):
        super().__init__(f"Fold {fold} is too small for the '{role}' role: {cause}")
        self.fold = fold
        self.role = role
        self.cause = cause


class GenerationStalled(MetaLearnerError):
    pass


class SchemaError(MetaLearnerError):
    def __init__(self, column):
        super().__init__(f"Missing column '{column}'")
        self.column = column


class ParseError(MetaLearnerError):
    def __init__(self, row, column, value):
        super().__init__(f"Non-numeric value {value!r} at row {row}, column '{column}'")
        self.row = row
        self.column = column


class InsufficientReplications(MetaLearnerError):
    pass


class ResultWriteError(MetaLearnerError):
    def __init__(self, path, cause):
        super().__init__(f"Failed to write results to {path}: {cause}")
        self.path = path
        self.cause = cause
