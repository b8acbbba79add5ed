"""Command-line runner (see ``main``)."""

from .main import main

__all__ = ["main"]
