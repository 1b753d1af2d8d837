"""Exception types raised across the package."""


class VorhcError(Exception):
    pass


class OverlapError(VorhcError):
    """Two disks intersect or touch, so no collision cone exists."""


class DegenerateConeError(VorhcError):
    """Tangent directions (or a decomposition basis) are numerically parallel."""


class DomainError(VorhcError, ValueError):
    pass


class SingularInnovationError(VorhcError):
    """Kalman innovation covariance cannot be inverted."""


class ConfigError(VorhcError, ValueError):
    pass
