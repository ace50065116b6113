"""Mesh-free neural topology optimization toolkit."""

__version__ = "0.1.0"
