"""Declarative figure regeneration for pspin-anneal result tables."""

__version__ = "0.1.0"
