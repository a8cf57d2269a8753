"""Robust quantum kernel SVMs under shot noise."""

__version__ = "0.1.0"
