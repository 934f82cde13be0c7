"""Exception hierarchy shared by all modules."""


class SignBiasError(Exception):
    """Base class for library errors."""


class ConfigError(SignBiasError, ValueError):
    """Malformed or inconsistent run configuration."""


class HamiltonianError(SignBiasError, ValueError):
    """Invalid Pauli term, site index or model description."""


class PreconditionError(SignBiasError, ValueError):
    """An operation was called outside its domain of validity."""


class NumericalError(SignBiasError, ArithmeticError):
    """A numerical procedure failed or produced an unusable result."""


class DegenerateGroundStateError(NumericalError):
    """The ground state is not unique."""


class NotPositiveDefiniteError(NumericalError):
    """A kernel expected to be positive definite is not."""


class KernelConstructionError(NumericalError):
    """A generated kernel violates a structural guarantee."""


class FlowIntegrationError(NumericalError):
    """The ODE integrator failed (step underflow, non-finite state)."""
