"""Steady-state CPT clock-cell simulator for a seven-level Rb D1 model."""
__version__ = "0.1.0"
