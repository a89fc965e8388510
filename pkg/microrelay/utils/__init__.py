"""Ambient utilities: configuration, diagnostics and logging.

Operator statistics live in `microrelay.utils.stats`, which depends on the IR.
"""

from .config import AppConfig, config
from .errors import MicroRelayError, PassError, RuntimeTrap
from .logging_setup import LOG_FORMAT, setup_logging
from .span import SourceSpan

__all__ = [
    "AppConfig",
    "config",
    "MicroRelayError",
    "PassError",
    "RuntimeTrap",
    "LOG_FORMAT",
    "setup_logging",
    "SourceSpan",
]
