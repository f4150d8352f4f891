"""Core exception definitions"""

from core.exceptions.base import (
    EXIT_OK,
    EXIT_INTERNAL,
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_IO,
    ModalIdError,
    ConfigurationError,
    ValidationError,
    DataFormatError,
    ArtifactIOError,
    NumericalError,
    PoleEvaluationError,
    SingularSystemError,
    RankDeficientError,
    RealnessError,
    StageFailure,
)

__all__ = [
    # Exit codes
    "EXIT_OK",
    "EXIT_INTERNAL",
    "EXIT_CONFIG",
    "EXIT_NUMERICAL",
    "EXIT_IO",
    # Base exception
    "ModalIdError",
    # Input errors
    "ConfigurationError",
    "ValidationError",
    "DataFormatError",
    "ArtifactIOError",
    # Numerical errors
    "NumericalError",
    "PoleEvaluationError",
    "SingularSystemError",
    "RankDeficientError",
    "RealnessError",
    # Pipeline
    "StageFailure",
]
