"""Configuration module for microrelay.

Values come from the process environment, optionally seeded from a `.env` file
in the working directory (python-dotenv).
"""

import logging
import os
from dataclasses import dataclass, field

try:
    from dotenv import load_dotenv

    HAS_DOTENV = True
except ImportError:
    HAS_DOTENV = False

logger = logging.getLogger(__name__)

if HAS_DOTENV:
    load_dotenv()


def _get_env_value(key: str, default: str = "") -> str:
    """Get a configuration value from the environment.

    Args:
        key: Environment variable name
        default: Default value if the variable is unset or blank

    Returns:
        Value as string, with surrounding quotes removed
    """
    value = os.environ.get(key)
    if value is None:
        return default

    value = value.strip()
    # Remove surrounding quotes
    if (value.startswith('"') and value.endswith('"')) or (
        value.startswith("'") and value.endswith("'")
    ):
        value = value[1:-1]
    return value if value else default


def _get_int_value(key: str, default: int) -> int:
    """Get an integer configuration value, falling back on malformed input."""
    raw = _get_env_value(key, "")
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer {key}={raw!r}; using {default}")
        return default


@dataclass
class AppConfig:
    """Application configuration class."""

    # Execution budgets
    INTERP_FUEL: int = field(
        default_factory=lambda: _get_int_value("MICRORELAY_FUEL", 10_000_000)
    )
    PE_FUEL: int = field(
        default_factory=lambda: _get_int_value("MICRORELAY_PE_FUEL", 10_000)
    )
    RECURSION_LIMIT: int = field(
        default_factory=lambda: _get_int_value("MICRORELAY_RECURSION_LIMIT", 20_000)
    )

    # Quantization
    QUANT_BITS: int = field(
        default_factory=lambda: _get_int_value("MICRORELAY_QUANT_BITS", 8)
    )
    CALIB_MIN_EXP: int = field(
        default_factory=lambda: _get_int_value("MICRORELAY_CALIB_MIN_EXP", -16)
    )
    CALIB_MAX_EXP: int = field(
        default_factory=lambda: _get_int_value("MICRORELAY_CALIB_MAX_EXP", 16)
    )

    # Text format
    META_THRESHOLD: int = field(
        default_factory=lambda: _get_int_value("MICRORELAY_META_THRESHOLD", 0)
    )

    # CLI
    LOG_LEVEL: str = field(
        default_factory=lambda: _get_env_value("MICRORELAY_LOG_LEVEL", "WARNING")
    )
    DEFAULT_ENTRY: str = "main"
    SOURCE_SUFFIX: str = ".rly"

    def calibration_scales(self) -> list[float]:
        """Get the candidate power-of-two scales swept by calibration."""
        return [2.0**e for e in range(self.CALIB_MIN_EXP, self.CALIB_MAX_EXP + 1)]


# Global config instance
config = AppConfig()
