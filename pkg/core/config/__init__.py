"""Configuration and validation module"""

from core.config.settings import Settings, settings
from core.config.validation import (
    FitPreflight,
    validate_fit_paths,
)

__all__ = [
    "Settings",
    "settings",
    "FitPreflight",
    "validate_fit_paths",
]
