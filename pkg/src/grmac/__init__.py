"""Behavioral models of integer and gain-ranging analog compute-in-memory MACs."""

__version__ = "0.1.0"
