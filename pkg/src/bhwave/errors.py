"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside its admissible range."""


class InstabilityError(DomainError):
    """A time step violates the explicit stability bound."""


class IntegrationError(RuntimeError):
    """An adaptive ODE solve failed to meet its error control."""


class QuadratureError(RuntimeError):
    """A quadrature failed to converge under node doubling."""


class CertificateError(RuntimeError):
    """A constructed object violates one of its certified bounds."""


class ConeViolationError(RuntimeError):
    """Numerical support escaped the light cone; the scheme is broken."""


class InsufficientSpanError(ValueError):
    """Not enough usable records, or too narrow an amplitude span, to fit."""


class InsufficientSnapshotsError(ValueError):
    """Stored solution snapshots are too coarse for the requested functional."""


class ConfigError(ValueError):
    """Malformed or invalid configuration input."""
