"""Certified escape/trapped decisions for iterated continuous maps on R^d."""

__version__ = "0.1.0"
