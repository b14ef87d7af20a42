"""Fall-detection workbench for a standing planar four-link robot."""

__version__ = "0.1.0"
