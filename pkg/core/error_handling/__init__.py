"""Error handling module"""
from core.error_handling.handlers import (
    ErrorContext,
    StageContext,
    log_error_summary
)

__all__ = [
    'ErrorContext',
    'StageContext',
    'log_error_summary'
]
