"""Trace-driven simulation of GPU cluster scheduling and energy saving."""
__version__ = "0.1.0"
