"""SCLENS package: semiclassical lensing laboratory for dispersive PDE."""

__version__ = "0.3.0"
