"""Transient stability toolkit for grid-forming converters under complex droop control."""
__version__ = "0.1.0"
