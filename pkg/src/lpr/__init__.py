"""Learned path ranking workbench for a planar arm."""

__version__ = "0.1.0"
