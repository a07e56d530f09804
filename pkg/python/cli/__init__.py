"""mpbridge CLI module."""

from cli.main import cli

__all__ = ["cli"]
