"""Array validation utilities"""
import logging

import numpy as np

from core.exceptions import ValidationError

logger = logging.getLogger(__name__)

class FiniteArrayValidator:
    """Finite-value checks"""

    @staticmethod
    def validate(array) -> bool:
        """Validate that every entry is finite"""
        return bool(np.all(np.isfinite(np.asarray(array))))

    @staticmethod
    def validate_or_raise(array, name: str) -> np.ndarray:
        """Validate finiteness and raise exception if invalid"""
        array = np.asarray(array)
        if not FiniteArrayValidator.validate(array):
            bad = np.argwhere(~np.isfinite(array))
            raise ValidationError(
                f"{name} contains non-finite values",
                details={"first_index": bad[0].tolist()}
            )
        return array

class StrictlyIncreasingValidator:
    """Ordering checks for 1-D grids"""

    @staticmethod
    def validate(values) -> bool:
        """Validate strictly increasing order"""
        values = np.asarray(values)
        return values.ndim == 1 and bool(np.all(np.diff(values) > 0))

    @staticmethod
    def validate_or_raise(values, name: str) -> np.ndarray:
        """Validate ordering and raise exception if invalid"""
        if not StrictlyIncreasingValidator.validate(values):
            raise ValidationError(f"{name} must be a strictly increasing 1-D sequence")
        return np.asarray(values)

class SymmetricValidator:
    """Symmetry checks for real square matrices"""

    @staticmethod
    def validate(matrix, rtol: float = 1e-10) -> bool:
        """Validate ‖M − Mᵀ‖ ≤ rtol·‖M‖"""
        matrix = np.asarray(matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            return False
        scale = max(np.linalg.norm(matrix), np.finfo(float).tiny)
        return bool(np.linalg.norm(matrix - matrix.T) <= rtol * scale)

    @staticmethod
    def validate_or_raise(matrix, name: str, rtol: float = 1e-10) -> np.ndarray:
        """Validate symmetry and raise exception if invalid"""
        if not SymmetricValidator.validate(matrix, rtol):
            raise ValidationError(f"{name} must be square and symmetric")
        return np.asarray(matrix)

class PositiveDefiniteValidator:
    """Positive definiteness via Cholesky"""

    @staticmethod
    def validate(matrix) -> bool:
        """Validate that a symmetric matrix admits a Cholesky factor"""
        if not SymmetricValidator.validate(matrix):
            return False
        try:
            np.linalg.cholesky(np.asarray(matrix, dtype=float))
        except np.linalg.LinAlgError:
            return False
        return True

    @staticmethod
    def validate_or_raise(matrix, name: str) -> np.ndarray:
        """Validate positive definiteness and raise exception if invalid"""
        if not PositiveDefiniteValidator.validate(matrix):
            raise ValidationError(f"{name} must be symmetric positive definite")
        return np.asarray(matrix)

class HermitianPSDValidator:
    """Hermitian positive semi-definite checks, single matrix or stacked"""

    @staticmethod
    def min_relative_eigenvalue(matrices) -> np.ndarray:
        """Smallest eigenvalue of each Hermitian part relative to its spectral norm"""
        matrices = np.asarray(matrices)
        stacked = matrices.reshape((-1,) + matrices.shape[-2:])
        hermitian = 0.5 * (stacked + np.conj(np.swapaxes(stacked, -1, -2)))
        eigenvalues = np.linalg.eigvalsh(hermitian)
        scale = np.maximum(np.max(np.abs(eigenvalues), axis=-1), np.finfo(float).tiny)
        return eigenvalues[:, 0] / scale

    @staticmethod
    def validate(matrices, rtol: float = 1e-12) -> bool:
        """Validate Hermitian symmetry and eigenvalues ≥ −rtol·‖M‖"""
        matrices = np.asarray(matrices)
        if matrices.ndim < 2 or matrices.shape[-1] != matrices.shape[-2]:
            return False
        adjoint = np.conj(np.swapaxes(matrices, -1, -2))
        scale = max(np.max(np.abs(matrices), initial=0.0), np.finfo(float).tiny)
        if np.max(np.abs(matrices - adjoint), initial=0.0) > 1e-10 * scale:
            return False
        return bool(np.all(HermitianPSDValidator.min_relative_eigenvalue(matrices) >= -rtol))

    @staticmethod
    def validate_or_raise(matrices, name: str, rtol: float = 1e-12) -> np.ndarray:
        """Validate Hermitian PSD and raise exception naming the first failing index"""
        matrices = np.asarray(matrices)
        if HermitianPSDValidator.validate(matrices, rtol):
            return matrices
        stacked = matrices.reshape((-1,) + matrices.shape[-2:])
        for index, matrix in enumerate(stacked):
            if not HermitianPSDValidator.validate(matrix, rtol):
                raise ValidationError(
                    f"{name} is not Hermitian positive semi-definite at index {index}",
                    details={"index": index}
                )
        raise ValidationError(f"{name} is not Hermitian positive semi-definite")
