"""Core package - configuration, logging, exceptions, and validation"""

# Configuration
from core.config import settings, FitPreflight, validate_fit_paths

# Exceptions
from core.exceptions import (
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
    StageFailure
)

# Error Handling
from core.error_handling import (
    ErrorContext,
    StageContext,
    log_error_summary
)

# Validation
from core.validation import (
    FiniteArrayValidator,
    StrictlyIncreasingValidator,
    SymmetricValidator,
    PositiveDefiniteValidator,
    HermitianPSDValidator
)

# Logging
from core.logging import (
    setup_logging,
    PerformanceLogger,
    JSONFormatter,
    set_run_id,
    set_stage
)

__all__ = [
    # Configuration
    'settings',
    'FitPreflight',
    'validate_fit_paths',
    # Exceptions
    'ModalIdError',
    'ConfigurationError',
    'ValidationError',
    'DataFormatError',
    'ArtifactIOError',
    'NumericalError',
    'PoleEvaluationError',
    'SingularSystemError',
    'RankDeficientError',
    'RealnessError',
    'StageFailure',
    # Error Handling
    'ErrorContext',
    'StageContext',
    'log_error_summary',
    # Validation
    'FiniteArrayValidator',
    'StrictlyIncreasingValidator',
    'SymmetricValidator',
    'PositiveDefiniteValidator',
    'HermitianPSDValidator',
    # Logging
    'setup_logging',
    'PerformanceLogger',
    'JSONFormatter',
    'set_run_id',
    'set_stage'
]
