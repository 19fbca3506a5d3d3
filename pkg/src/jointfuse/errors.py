"""Exception and warning types raised across the package."""


class JointFuseError(Exception):
    """Base class for all package errors."""


class ConfigError(JointFuseError):
    """Malformed or inconsistent configuration."""


class DataError(JointFuseError):
    """Malformed input data."""


class MissingColumn(DataError):
    """A design or data column named in the model is absent."""

    def __init__(self, column, where=""):
        self.column = column
        msg = f"missing column {column!r}"
        if where:
            msg += f" ({where})"
        super().__init__(msg)


class InvariantViolation(DataError):
    """Data or specification breaks a structural invariant."""


class UnsupportedDesign(ConfigError):
    """Design cannot be represented by the requested association or family."""


class SingularDesign(JointFuseError):
    """Least-squares initialization failed."""


class UnsupportedOrder(ValueError, JointFuseError):
    """Quadrature order outside the supported range."""


class EmptyInterval(ValueError, JointFuseError):
    """Integration interval with b <= a."""


class NonFiniteIntegrand(ArithmeticError, JointFuseError):
    """Integrand evaluated to a non-finite value at a node."""


class NonPositiveTime(ValueError, JointFuseError):
    """Hazard evaluated at t <= 0."""


class NonPositiveVariance(ValueError, JointFuseError):
    """Variance parameter not strictly positive."""


class NonBinaryValue(ValueError, JointFuseError):
    """Bernoulli marker value outside {0, 1}."""


class DomainError(ValueError, JointFuseError):
    """Argument outside the mathematical domain of an operation."""


class NotPositiveDefinite(ValueError, JointFuseError):
    """Covariance matrix is not symmetric positive definite."""


class FactorizationFailure(ArithmeticError, JointFuseError):
    """Cholesky factorization failed even after jitter."""


class SamplerError(JointFuseError):
    """Base class for failures inside a Markov chain."""


class NonFiniteLogPosterior(SamplerError):
    """Initial state has a non-finite log posterior."""


class ChainDiverged(SamplerError):
    """Log posterior stayed at -inf for a whole adaptation window."""


class ConvergenceFailure(ArithmeticError, JointFuseError):
    """Root finding did not converge."""


class UnknownParameter(KeyError, JointFuseError):
    """Requested parameter name is not among the monitored columns."""


class DegenerateChainsWarning(RuntimeWarning):
    """Within-chain variance is zero while chain means differ."""


class ClampWarning(RuntimeWarning):
    """Cumulative hazard was clamped to its finite ceiling."""
