"""
Exception types raised by flora.

Invalid input always surfaces as a ValueError subclass; failures of the
numerical machinery or of a pipeline phase are RuntimeError subclasses.
"""
from __future__ import annotations


class ConfigError(ValueError):
    """Invalid manifest, flag, search space or parameter value."""


class EncodingError(ConfigError):
    """A configuration value lies outside its domain."""

    def __init__(self, domain: str, message: str) -> None:
        super().__init__(f"{domain}: {message}")
        self.domain = domain


class DataError(ValueError):
    """Dataset cannot be ingested or does not meet a precondition."""


class SurfaceFitError(RuntimeError):
    """A regressor could not be fitted (e.g. kernel matrix not positive definite)."""


class ObjectiveError(RuntimeError):
    """An HPO objective kept failing on fresh samples."""


class PhaseError(RuntimeError):
    """Failure inside one phase of the federated pipeline."""

    def __init__(self, phase: str, cause: BaseException) -> None:
        super().__init__(f"{phase}: {cause}")
        self.phase = phase
