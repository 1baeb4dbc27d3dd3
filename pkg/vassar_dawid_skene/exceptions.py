"""Custom exceptions for vassar_dawid_skene package."""


class CrowdsourcingError(Exception):
    """Base exception for all vassar_dawid_skene errors."""
    pass


class ValidationError(CrowdsourcingError, ValueError):
    """Raised when a domain object or argument violates its invariants."""
    pass


class ExponentDomainError(CrowdsourcingError, ValueError):
    """Raised when a logarithm of a zero probability would be required."""
    pass


class DegenerateEstimateError(CrowdsourcingError):
    """Raised when the one-coin moment estimator has a near-zero denominator."""
    pass


class InsufficientDataError(CrowdsourcingError):
    """Raised when too few positive error points are available for a fit."""
    pass


class EnumerationTooLargeError(CrowdsourcingError):
    """Raised when exact enumeration over k**m label columns is infeasible."""
    pass


class ConfigError(CrowdsourcingError, ValueError):
    """Raised when an experiment configuration or pool spec is invalid."""
    pass


class InputFileError(CrowdsourcingError):
    """Raised when an input file cannot be read or parsed."""

    def __init__(self, path, reason: str):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")
