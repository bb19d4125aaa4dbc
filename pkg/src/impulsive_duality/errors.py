"""Exception hierarchy shared by all modules."""


class ConfigurationError(ValueError):
    """An invalid specification or scenario block."""


class DomainError(ValueError):
    """An argument outside the domain of an operation."""


class UnsupportedSpecError(ValueError):
    """The operation has no closed form for the given specification."""


class DirichletError(ValueError):
    """A test function does not vanish at t=0 and t=T."""


class NumericalError(RuntimeError):
    """An iterative numerical procedure failed to converge."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class IntegrationError(NumericalError):
    """The ODE integrator could not reach the end of a segment."""

    def __init__(self, message, last_good_time, **diagnostics):
        super().__init__(message, last_good_time=last_good_time, **diagnostics)
        self.last_good_time = last_good_time
