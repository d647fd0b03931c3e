"""Exception types raised by the numerical kernels."""


class NumericalError(RuntimeError):
    """Base class for failures that the CLI maps to exit status 2."""


class SingularShift(NumericalError):
    pass


class NonConvergent(NumericalError):
    pass


class Overflow(NumericalError):
    pass


class EigenvalueLost(NumericalError):
    pass


class GapViolation(NumericalError):
    pass


class StepFailure(NumericalError):
    pass


class PoleProximity(NumericalError):
    pass


class KernelViolation(NumericalError):
    pass


class AssumptionViolated(NumericalError):
    def __init__(self, label, message=""):
        self.label = label
        super().__init__(f"{label}: {message}" if message else label)


class ResonanceAmbiguity(NumericalError):
    pass


class DimensionMismatch(ValueError):
    pass


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (CLI exit status 1)."""
