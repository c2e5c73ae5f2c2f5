"""Exception types shared across the pipeline."""

from __future__ import annotations


class GeometryError(ValueError):
    """Invalid geometric input (non-positive radius, bad node count, ...)."""


class NoEquivalentEllipseError(ValueError):
    """The given polarization tensor has no realizable equivalent ellipse."""


class MapSingularityError(ValueError):
    """A point to be mapped lies (numerically) on a pole of the Mobius map."""


class ResonanceProximityError(RuntimeError):
    """Contrast parameter too close to an operator eigenvalue.

    Carries the offending contrast and, when available, the nearest
    eigenvalue of the discretized operator.
    """

    def __init__(self, message, contrast=None, nearest_eigenvalue=None):
        super().__init__(message)
        self.contrast = contrast
        self.nearest_eigenvalue = nearest_eigenvalue


class InsufficientPeaksError(RuntimeError):
    """A response curve contains fewer local maxima than requested."""


class StallError(RuntimeError):
    """Descent cannot make progress (repeated step rejections)."""


class ConfigError(ValueError):
    """Invalid pipeline configuration; message carries the field path."""
