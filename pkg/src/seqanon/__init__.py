"""Anonymization of categorical activity sequences by multi-level clustering."""

__version__ = "0.1.0"
