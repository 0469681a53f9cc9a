"""Explicit-state strategic model checking for asynchronous multi-agent systems."""

__version__ = "0.1.0"
