"""Crash-report driven driving-scenario generation, mutation and analysis."""

from .config import TOOL_VERSION as __version__

__all__ = ["__version__"]
