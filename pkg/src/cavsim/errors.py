"""Exception types shared across the package.

Every error raised deliberately by cavsim derives from :class:`CavsimError`,
so callers (and the command-line layer) can map failure classes to exit
codes without string matching.
"""

from __future__ import annotations


class CavsimError(Exception):
    """Base class for all errors raised by cavsim."""


class BasisError(CavsimError):
    """Quantum numbers or a flat index outside the declared basis."""


class DimensionError(CavsimError):
    """Operator/state dimension mismatch, or a dimension cap exceeded."""


class NormalizationError(CavsimError):
    """A state that must be normalized is not, or a norm collapsed to zero."""


class RegimeError(CavsimError):
    """Parameters outside the validity regime of a closed-form expression."""


class ConfigError(CavsimError):
    """Invalid run configuration. Carries the offending key when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class RegimeWarning(UserWarning):
    """Closed-form expression used near the edge of its validity regime."""
