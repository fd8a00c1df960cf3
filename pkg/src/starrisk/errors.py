"""Exception hierarchy shared by all modules."""


class StarRiskError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(StarRiskError, ValueError):
    """An input parameter is outside its admissible range."""


class StepSizeError(ParameterError):
    """The lattice step is too coarse for the driver's Lipschitz constant."""

    def __init__(self, message, suggested_steps=None):
        super().__init__(message)
        self.suggested_steps = suggested_steps


class EvaluationError(StarRiskError, ArithmeticError):
    """A payoff, driver or conjugate produced an unusable value at a node."""

    def __init__(self, message, step=None, node=None):
        super().__init__(message)
        self.step = step
        self.node = node


class NumericalError(StarRiskError, ArithmeticError):
    """An iterative procedure failed to converge."""

    def __init__(self, message, step=None, node=None, residual=None):
        super().__init__(message)
        self.step = step
        self.node = node
        self.residual = residual


class PreconditionError(StarRiskError, ValueError):
    """A driver lacks a property an operation relies on."""


class ValidationError(StarRiskError, ValueError):
    """A configuration file failed validation; ``path`` locates the field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
