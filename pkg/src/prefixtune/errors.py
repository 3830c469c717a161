"""Exception hierarchy shared by the tuner modules."""


class PrefixTuneError(Exception):
    """Base class for all errors raised by prefixtune."""


class ValidationError(PrefixTuneError, ValueError):
    """Invalid input: a descriptor field, a resource limit or a run option."""


class SizeError(ValidationError):
    """Problem size is not a power of two or out of the supported range."""


class UnsupportedRadixError(ValidationError):
    pass


class PlanError(ValidationError):
    pass


class SingularSystemError(PrefixTuneError, ArithmeticError):
    """A zero pivot was met while eliminating a tridiagonal system."""


class NoFeasibleConfigError(PrefixTuneError):
    """The search space is empty or every candidate failed to run."""


class UntrainableModelError(PrefixTuneError):
    pass


class BackendError(PrefixTuneError):
    pass


class EvaluationFailedError(NoFeasibleConfigError, BackendError):
    """Every candidate was evaluated and none ran successfully."""
