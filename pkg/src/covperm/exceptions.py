"""Exception hierarchy shared across the package."""


class CovPermError(Exception):
    """Base class for all package errors."""


class InvalidInput(CovPermError, ValueError):
    pass


class NotPSD(CovPermError, ValueError):
    """A matrix expected to be positive semi-definite has a materially negative eigenvalue."""


class InsufficientData(CovPermError, ValueError):
    pass


class CaseInapplicable(CovPermError):
    """The requested correction regime's rank assumption is numerically violated."""


class VarianceUndefined(CovPermError, ValueError):
    pass


class InsufficientReplicates(CovPermError, ValueError):
    pass


class MethodUnavailable(CovPermError):
    pass
