"""Proleptic temporal ensembling for action-chunking policies."""

__version__ = "0.1.0"
