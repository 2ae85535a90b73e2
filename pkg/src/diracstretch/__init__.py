"""Stretching of Dirac structures along isotropic subbundles."""

__version__ = "0.1.0"
