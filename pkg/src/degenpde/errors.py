"""Exception hierarchy shared by all solver modules."""


class SolverError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(SolverError, ValueError):
    """Argument outside the mathematical domain of a coefficient law or map."""


class RangeError(SolverError, ValueError):
    """Value outside the invertible/tabulated range of a monotone map."""


class NonConvergence(SolverError, RuntimeError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class TauTooLarge(SolverError, ValueError):
    """Time step does not satisfy tau < 1/C_L, so the implicit step may be ill-posed."""


class SingularSystem(SolverError, ValueError):
    """Pure-Neumann elliptic system without a Dirichlet part is singular."""


class FixedPointStall(SolverError, RuntimeError):
    """Coupling sweeps stopped making progress before reaching tolerance."""

    def __init__(self, message, window=None, sweep=None, distance=None):
        super().__init__(message)
        self.window = window
        self.sweep = sweep
        self.distance = distance


class MonotonicityViolation(SolverError, ValueError):
    """Sampled kinetics violate the monotonicity hypotheses of the comparison system."""


class NoFront(SolverError, ValueError):
    """No free boundary present in the field; exponent fitting is undefined."""


class OracleUnavailable(SolverError, ValueError):
    """Requested convergence oracle does not apply to this configuration."""


class ConfigError(SolverError, ValueError):
    """Scenario configuration is malformed or inconsistent."""


class NonCauchyWarning(UserWarning):
    """Distances between successive regularization levels stopped decreasing."""
