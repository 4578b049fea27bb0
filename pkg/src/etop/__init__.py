"""Elliptic integrable tops: kernel functions, R-matrices, Lax models and flows."""

__version__ = "0.1.0"
