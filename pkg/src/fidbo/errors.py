"""Exception types shared across the package."""


class FidboError(Exception):
    """Base class for all package-specific errors."""


class InvalidSpecError(FidboError):
    """Kernel or model specification violates its invariants."""


class UnsupportedDerivativeError(FidboError):
    """Requested a derivative cross-covariance outside the supported set."""


class IllConditionedModelError(FidboError):
    """Gram factorization failed even at the maximum jitter level."""

    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter


class InvalidStartError(FidboError):
    """MCMC chain started at a point with non-finite log density."""


class InvalidRecordError(FidboError):
    """A cost or overhead record violates its domain (e.g. cost <= 0)."""


class NegligibleMassError(FidboError):
    """Truncation retains too little probability mass to moment-match."""


class AcquisitionUnavailableError(FidboError):
    """No valid minimizer draw survived; acquisition cannot be evaluated."""


class ConfigError(FidboError):
    """Malformed or inconsistent experiment configuration."""
