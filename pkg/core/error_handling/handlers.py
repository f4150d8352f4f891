"""Error handling: operation contexts and error summaries"""
import logging
import time
from typing import Optional, Dict, Any
from datetime import datetime, timezone

from core.exceptions import ModalIdError, StageFailure
from core.logging import PerformanceLogger, set_stage

logger = logging.getLogger(__name__)

performance_logger = PerformanceLogger()

class ErrorContext:
    """Context manager for error handling and logging"""

    def __init__(
        self,
        operation: str,
        logger_instance: Optional[logging.Logger] = None,
        **context
    ):
        self.operation = operation
        self.logger = logger_instance or logger
        self.context = context
        self.start_time = None
        self.duration_ms = 0.0

    def __enter__(self):
        self.start_time = time.perf_counter()
        self.logger.info(f"Starting operation: {self.operation}", extra={"context": self.context})
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.duration_ms = (time.perf_counter() - self.start_time) * 1000.0
        performance_logger.log_operation(self.operation, self.duration_ms, success=exc_type is None)

        if exc_type:
            self.logger.error(
                f"Operation failed: {self.operation}",
                extra={
                    "context": {
                        **self.context,
                        "error": str(exc_val),
                        "duration_ms": self.duration_ms
                    }
                },
                exc_info=(exc_type, exc_val, exc_tb)
            )
        else:
            self.logger.info(
                f"Operation completed: {self.operation}",
                extra={
                    "context": {
                        **self.context,
                        "duration_ms": self.duration_ms
                    }
                }
            )

        return False

class StageContext(ErrorContext):
    """ErrorContext for one pipeline stage.

    Tags log records with the stage name and re-raises toolkit errors as
    StageFailure so the caller can report which stage broke.
    """

    def __enter__(self):
        self._previous_stage = set_stage(self.operation)
        return super().__enter__()

    def __exit__(self, exc_type, exc_val, exc_tb):
        try:
            super().__exit__(exc_type, exc_val, exc_tb)
        finally:
            set_stage(self._previous_stage)

        if exc_type and issubclass(exc_type, ModalIdError) and not isinstance(exc_val, StageFailure):
            raise StageFailure(self.operation, exc_val) from exc_val
        return False

def log_error_summary(exception: Exception, context: str = "") -> Dict[str, Any]:
    """Generate error summary from exception with optional context"""
    summary = {
        "exception_type": type(exception).__name__,
        "message": str(exception),
        "context": context,
        "timestamp": datetime.now(timezone.utc).isoformat()
    }
    if isinstance(exception, ModalIdError):
        summary["error_code"] = exception.error_code
        summary["details"] = exception.details
    return summary
