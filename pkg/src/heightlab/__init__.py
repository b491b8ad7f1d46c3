"""Exact rational-point laboratory for hypersurfaces over Q."""

__version__ = "0.1.0"
