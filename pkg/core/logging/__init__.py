"""Logging module"""
from core.logging.config import setup_logging, PerformanceLogger, JSONFormatter
from core.logging.structured_logging import set_run_id, set_stage, clear_context, get_context

__all__ = [
    'setup_logging',
    'PerformanceLogger',
    'JSONFormatter',
    'set_run_id',
    'set_stage',
    'clear_context',
    'get_context'
]
