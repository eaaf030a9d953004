"""Texture-based landmark detection and matching for serial section images."""

__version__ = "0.1.0"
