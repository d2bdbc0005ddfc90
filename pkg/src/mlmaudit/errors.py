"""Exception and warning types raised across the package."""


class AuditError(Exception):
    """Base class for every error raised by mlmaudit."""


# ingest
class MissingColumnError(AuditError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing column"


class ParseError(AuditError, ValueError):
    pass


class EmptyDatasetError(AuditError, ValueError):
    pass


class MissingValueError(AuditError, ValueError):
    pass


class RoleError(AuditError, ValueError):
    pass


class GroupTooSmallError(AuditError, ValueError):
    pass


# mlm
class UnknownGroupError(AuditError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown group"


class DegenerateGroupError(AuditError, ValueError):
    pass


class SeparationDetectedError(AuditError, ArithmeticError):
    pass


class NoConvergenceWarning(UserWarning):
    pass


class NumericalUnderflowWarning(UserWarning):
    pass


class ModelFormatError(AuditError, ValueError):
    pass


# stattests
class ConstantColumnError(AuditError, ValueError):
    pass


class SampleTooSmallError(AuditError, ValueError):
    pass


class SampleTooLargeError(AuditError, ValueError):
    pass


class ConstantSampleError(AuditError, ValueError):
    pass


class RankDeficientDesignError(AuditError, ValueError):
    pass


# accuracy / fairness
class SingleClassError(AuditError, ValueError):
    pass


class EmptySideError(AuditError, ValueError):
    pass


class ZeroDenominatorError(AuditError, ZeroDivisionError):
    pass


class UndefinedRateError(AuditError, ValueError):
    pass


# explainers
class TooManyFeaturesError(AuditError, ValueError):
    pass


class DegenerateBackgroundError(AuditError, ValueError):
    pass


class DegenerateWeightsError(AuditError, ValueError):
    pass


# audit / config
class UnknownKpiError(AuditError, KeyError):
    pass


class NonFiniteValueError(AuditError, ValueError):
    pass


class ConfigError(AuditError, ValueError):
    pass


# explain_eval
class ConstantVectorError(AuditError, ValueError):
    pass
