"""Logging configuration shared by the CLI and the scripts."""

import logging
import sys
from typing import Optional

from .config import config

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(level: Optional[str] = None) -> None:
    """Send log records to standard error in the project's format.

    Args:
        level: Level name such as "INFO"; defaults to MICRORELAY_LOG_LEVEL
    """
    name = (level or config.LOG_LEVEL).upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        numeric = logging.WARNING
    logging.basicConfig(level=numeric, format=LOG_FORMAT, stream=sys.stderr, force=True)
