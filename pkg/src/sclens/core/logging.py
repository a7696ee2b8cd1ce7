"""Logging setup."""

import logging
from typing import Optional

from .config import settings

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"


def resolve_log_level(level: Optional[str] = None) -> int:
    """Explicit level first, then DEBUG when ``SCLENS_DEBUG`` is set, then ``SCLENS_LOG_LEVEL``."""
    name = level or ("DEBUG" if settings.DEBUG else settings.LOG_LEVEL)
    return getattr(logging, name.strip().upper(), logging.INFO)


def configure_logging(level: Optional[str] = None) -> None:
    """Configure the root logger once for command-line runs."""
    logging.basicConfig(level=resolve_log_level(level), format=LOG_FORMAT)
