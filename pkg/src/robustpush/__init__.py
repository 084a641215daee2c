"""Belief-space planning of robust planar pushes."""
__version__ = "0.1.0"
