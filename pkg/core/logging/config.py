"""Logging configuration and utilities"""
import logging
import logging.handlers
import json
import sys
from pathlib import Path
from datetime import datetime, timezone
from typing import Optional

from core.logging.structured_logging import get_context

class JSONFormatter(logging.Formatter):
    """Format logs as JSON for better parsing"""

    def format(self, record: logging.LogRecord) -> str:
        log_data = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
            **get_context()
        }

        context = getattr(record, "context", None)
        if context:
            log_data["context"] = context

        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_data, ensure_ascii=False, default=str)

class PerformanceLogger:
    """Track and log stage durations"""

    def __init__(self, name: str = "performance"):
        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.INFO)

    def log_operation(self, operation: str, duration_ms: float, success: bool = True) -> None:
        """Log operation performance"""
        level = logging.INFO if success else logging.WARNING
        self.logger.log(
            level,
            f"Operation {operation}: {duration_ms:.2f}ms",
            extra={"context": {"operation": operation, "duration_ms": round(duration_ms, 3), "success": success}}
        )

    def log_iteration(self, solver: str, iteration: int, objective: float, **fields) -> None:
        """Log one solver iteration at debug level"""
        self.logger.debug(
            f"{solver} iteration {iteration}: objective={objective:.6e}",
            extra={"context": {"solver": solver, "iteration": iteration, "objective": objective, **fields}}
        )

def setup_logging(
    log_dir: Optional[str] = None,
    json_format: bool = True,
    level: str = "INFO"
) -> None:
    """Setup logging: stderr console plus rotating files when a log directory is given"""
    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)

    # Formatter
    if json_format:
        formatter = JSONFormatter()
    else:
        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )

    # Console handler; stdout is reserved for command output
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level.upper())
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    if not log_dir:
        return

    Path(log_dir).mkdir(parents=True, exist_ok=True)

    # File handler with rotation
    file_handler = logging.handlers.RotatingFileHandler(
        f"{log_dir}/modalid.log",
        maxBytes=10_000_000,  # 10MB
        backupCount=10
    )
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(formatter)
    root_logger.addHandler(file_handler)

    # Error log
    error_handler = logging.FileHandler(f"{log_dir}/error.log")
    error_handler.setLevel(logging.ERROR)
    error_handler.setFormatter(formatter)
    root_logger.addHandler(error_handler)
