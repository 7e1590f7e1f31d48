"""Guarded cubical type theory: kernel, checker, normalizer, CLI."""

__version__ = "0.1.0"
