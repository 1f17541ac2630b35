"""Dynamics of analytic self-maps of the punctured plane: escaping sets, charts, rasters."""

__version__ = "0.1.0"
