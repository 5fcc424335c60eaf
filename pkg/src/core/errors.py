"""
Exception hierarchy for wtransfer
All library errors derive from TransferError so callers can catch one type
"""


class TransferError(Exception):
    """Base class for all wtransfer errors"""


class ConfigError(TransferError, ValueError):
    """Invalid protocol or experiment configuration"""


class CapacityError(TransferError):
    """Requested structure exceeds the configured size limits"""


class GeometryMismatchError(TransferError):
    """Schedule, geometry and variant do not belong together"""


class SiteIndexError(TransferError, IndexError):
    """Site index outside the layout"""


class BoundDomainError(TransferError, ValueError):
    """Analytic bound evaluated outside its domain (e.g. beta = 0)"""


class PropagationError(TransferError):
    """Matrix exponential failed or produced a non-finite state"""


class FitError(TransferError, ValueError):
    """Regression input is unusable"""


class UnreachableTargetError(TransferError):
    """Target fidelity cannot be reached with the given success probability"""
