"""Exception taxonomy shared by all subsystems."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(ValueError):
    """A parameter set violates a structural precondition or invariant."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations) if violations else [message]


class NumericalError(RuntimeError):
    """A numerical routine failed to produce a trustworthy result."""


class SolverFault(RuntimeError):
    """Non-finite solver state; carries the last finite snapshot."""

    def __init__(self, message, t=None, snapshot=None):
        super().__init__(message)
        self.t = t
        self.snapshot = snapshot
