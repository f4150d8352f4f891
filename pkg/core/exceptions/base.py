"""Custom exception classes for the identification toolkit"""
from typing import Optional, Dict, Any, List
import logging

logger = logging.getLogger(__name__)

# Process exit codes
EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


class ModalIdError(Exception):
    """Base exception for toolkit errors"""
    def __init__(
        self,
        message: str,
        exit_code: int = EXIT_INTERNAL,
        error_code: str = "INTERNAL_ERROR",
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.exit_code = exit_code
        self.error_code = error_code
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for reports and logs"""
        return {
            "error": self.error_code,
            "message": self.message,
            "exit_code": self.exit_code,
            "details": self.details
        }

# Configuration Errors
class ConfigurationError(ModalIdError):
    """Raised when configuration is invalid or inconsistent"""
    def __init__(self, message: str, error_code: str = "CONFIG_ERROR", details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            exit_code=EXIT_CONFIG,
            error_code=error_code,
            details=details
        )

class ValidationError(ModalIdError):
    """Raised when a domain object violates one of its invariants"""
    def __init__(self, message: str, error_code: str = "VALIDATION_ERROR", details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            exit_code=EXIT_CONFIG,
            error_code=error_code,
            details=details
        )

# I/O Errors
class DataFormatError(ModalIdError):
    """Raised when an input file does not follow its format"""
    def __init__(self, path: str, message: str, row: Optional[int] = None):
        details: Dict[str, Any] = {"path": str(path)}
        if row is not None:
            details["row"] = row
        location = f" (row {row})" if row is not None else ""
        super().__init__(
            message=f"{path}{location}: {message}",
            exit_code=EXIT_IO,
            error_code="DATA_FORMAT_ERROR",
            details=details
        )

class ArtifactIOError(ModalIdError):
    """Raised when reading or writing an artifact fails"""
    def __init__(self, path: str, message: str):
        super().__init__(
            message=f"{path}: {message}",
            exit_code=EXIT_IO,
            error_code="IO_ERROR",
            details={"path": str(path)}
        )

# Numerical Errors
class NumericalError(ModalIdError):
    """Raised when a numerical procedure cannot produce a valid result"""
    def __init__(self, message: str, error_code: str = "NUMERICAL_ERROR", details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            exit_code=EXIT_NUMERICAL,
            error_code=error_code,
            details=details
        )

class PoleEvaluationError(NumericalError):
    """Raised when a model is evaluated at (or numerically on) one of its poles"""
    def __init__(self, component: str, index: int, s: complex):
        super().__init__(
            message=f"Evaluation at a pole of {component} {index} (s={s})",
            error_code="POLE_EVALUATION",
            details={"component": component, "index": index, "s": str(s)}
        )

class SingularSystemError(NumericalError):
    """Raised when a linear system is singular to working precision"""
    def __init__(self, what: str, condition: Optional[float] = None, null_space: Optional[List[str]] = None):
        details: Dict[str, Any] = {"system": what}
        message = f"Singular {what}"
        if condition is not None:
            details["reciprocal_condition"] = condition
            message += f" (reciprocal condition {condition:.3e})"
        if null_space:
            details["null_space"] = null_space
            message += f"; null-space directions involve {', '.join(null_space)}"
        super().__init__(message=message, error_code="SINGULAR_SYSTEM", details=details)

class RankDeficientError(NumericalError):
    """Raised when a least-squares regressor loses column rank"""
    def __init__(self, what: str, columns: List[str]):
        super().__init__(
            message=f"Rank-deficient {what}; dependent columns: {', '.join(columns)}",
            error_code="RANK_DEFICIENT",
            details={"system": what, "columns": columns}
        )

class RealnessError(NumericalError):
    """Raised when a quantity that must be real carries a significant imaginary part"""
    def __init__(self, what: str, index: int, relative_imag: float):
        super().__init__(
            message=f"{what} of mode {index} has relative imaginary residue {relative_imag:.3e}",
            error_code="REALNESS_CHECK",
            details={"quantity": what, "mode": index, "relative_imag": relative_imag}
        )

# Pipeline Errors
class StageFailure(ModalIdError):
    """Raised when a pipeline stage fails; keeps the exit code of the cause"""
    def __init__(self, stage: str, cause: ModalIdError):
        self.stage = stage
        self.cause = cause
        super().__init__(
            message=f"Stage '{stage}' failed: {cause.message}",
            exit_code=cause.exit_code,
            error_code=cause.error_code,
            details={"stage": stage, **cause.details}
        )
