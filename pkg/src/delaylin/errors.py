class DelayLinError(Exception):
    pass


class ConfigurationError(DelayLinError, ValueError):
    """Inconsistent dimensions, lags or parameters."""


class DomainError(DelayLinError, ValueError):
    """An operation was called outside its domain (e.g. m < n, phi not in F_n)."""


class CertificateError(DelayLinError):
    """The contraction hypothesis K(1) q < 1 does not hold."""


class ConsistencyError(DelayLinError, AssertionError):
    """A numerical self-check failed (Lipschitz probe, contraction ratio, ...)."""
