"""Semantic token-memory agents for partially observable RL."""

__version__ = "0.1.0"
