"""Microscopic traffic simulation of zonal loop road layouts versus signalized grids."""

__version__ = "0.1.0"
