"""Command-line interface."""

from .parser import DESCRIPTIONS, create_parser

__all__ = ["DESCRIPTIONS", "create_parser"]
