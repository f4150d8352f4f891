"""Validation module"""
from core.validation.validators import (
    FiniteArrayValidator,
    StrictlyIncreasingValidator,
    SymmetricValidator,
    PositiveDefiniteValidator,
    HermitianPSDValidator
)

__all__ = [
    'FiniteArrayValidator',
    'StrictlyIncreasingValidator',
    'SymmetricValidator',
    'PositiveDefiniteValidator',
    'HermitianPSDValidator'
]
