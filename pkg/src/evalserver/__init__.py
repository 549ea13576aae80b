"""Evaluation server for interactive and batch multimedia-retrieval experiments."""

__version__ = "0.1.0"
