"""Exception hierarchy.

Every error carries the name of the module that raised it so the CLI can
print a stable ``error:<module>:<kind>:`` prefix.
"""


class PipelineError(Exception):
    module = "pipeline"

    @property
    def kind(self):
        return type(self).__name__


# numerics
class NotPositiveDefinite(PipelineError):
    module = "numerics"


# dataset
class DatasetError(PipelineError):
    module = "dataset"


class ParseError(DatasetError):
    def __init__(self, message, row=None, column=None):
        where = ""
        if row is not None:
            where = f" (row {row}, column {column!r})"
        super().__init__(message + where)
        self.row = row
        self.column = column


class MissingLabel(DatasetError):
    pass


class SingleClassDataset(DatasetError):
    pass


class AmputationInfeasible(DatasetError):
    pass


# imputation
class ImputationError(PipelineError):
    module = "imputation"


class EmptyColumn(ImputationError):
    def __init__(self, column):
        super().__init__(f"feature {column} has no observed values")
        self.column = column


class DimensionMismatch(PipelineError):
    module = "imputation"


class NumericalBreakdown(PipelineError):
    module = "imputation"


# selection
class SelectionError(PipelineError):
    module = "selection"


class ClassTooSmall(SelectionError):
    pass


class NoFeaturesSelected(SelectionError):
    pass


# classifiers
class ClassifierError(PipelineError):
    module = "classifiers"


class SingleClass(ClassifierError):
    pass


class ClassifierBreakdown(ClassifierError):
    """Covariance stayed singular after ridge escalation."""


class ConvergenceWarning(UserWarning):
    """Iterative solver hit its cap; the best iterate is kept."""


# evaluation
class EvaluationError(PipelineError):
    module = "evaluation"


class ClassSmallerThanK(EvaluationError):
    pass


class LengthMismatch(EvaluationError):
    pass


class EmptyFold(EvaluationError):
    pass


# cli
class ConfigError(PipelineError):
    module = "cli"

    def __init__(self, key, reason):
        super().__init__(f"{key}: {reason}")
        self.key = key
        self.reason = reason
