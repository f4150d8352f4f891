"""Shared linear-algebra helpers: vec ordering, real-ified solves, conditioning checks"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.linalg.lapack import get_lapack_funcs

from core.exceptions import RankDeficientError, SingularSystemError

logger = logging.getLogger(__name__)

# Reciprocal condition below which a square solve is refused
RCOND_LIMIT = 1e-15


def vec(matrices: np.ndarray) -> np.ndarray:
    """Column-major vec of the trailing two axes: (..., ny, nu) -> (..., ny*nu)"""
    matrices = np.asarray(matrices)
    swapped = np.swapaxes(matrices, -1, -2)
    return swapped.reshape(matrices.shape[:-2] + (-1,))


def unvec(vectors: np.ndarray, n_rows: int, n_cols: int) -> np.ndarray:
    """Inverse of vec: (..., ny*nu) -> (..., ny, nu)"""
    vectors = np.asarray(vectors)
    shaped = vectors.reshape(vectors.shape[:-1] + (n_cols, n_rows))
    return np.swapaxes(shaped, -1, -2)


def realify(matrix: np.ndarray) -> np.ndarray:
    """Stack real and imaginary parts of the rows: [Re A; Im A]"""
    matrix = np.asarray(matrix)
    return np.concatenate([matrix.real, matrix.imag], axis=0)


def hermitian_part(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + np.conj(np.swapaxes(matrix, -1, -2)))


def hermitian_factor(weight: np.ndarray) -> np.ndarray:
    """Return L with Lᴴ L = W for a Hermitian PSD W (eigenvalue based, tolerates singular W)"""
    eigenvalues, eigenvectors = np.linalg.eigh(hermitian_part(weight))
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    return np.sqrt(eigenvalues)[..., :, None] * np.conj(np.swapaxes(eigenvectors, -1, -2))


def symmetric_factor(matrix: np.ndarray) -> np.ndarray:
    """Return real L with Lᵀ L = S for a real symmetric PSD S"""
    return hermitian_factor(np.asarray(matrix, dtype=float)).real


def reciprocal_condition(lu: np.ndarray, anorm: float) -> float:
    """LAPACK 1-norm reciprocal condition estimate from an LU factorization"""
    gecon, = get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0:
        return 0.0
    return float(rcond)


def solve_equilibrated(
    matrix: np.ndarray,
    rhs: np.ndarray,
    what: str,
    labels: Optional[Sequence[str]] = None
) -> np.ndarray:
    """Solve a square real system after row and column equilibration.

    Rows, then columns, are scaled to unit max-norm before the LU
    factorization; the reciprocal condition of the scaled matrix is checked
    against RCOND_LIMIT.
    """
    matrix = np.asarray(matrix, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    row_scale = np.max(np.abs(matrix), axis=1)
    if np.any(row_scale == 0.0):
        raise SingularSystemError(what, condition=0.0)
    matrix = matrix / row_scale[:, None]
    rhs = rhs / (row_scale if rhs.ndim == 1 else row_scale[:, None])

    norms = np.max(np.abs(matrix), axis=0)
    if np.any(norms == 0.0):
        zero = np.flatnonzero(norms == 0.0)
        names = [labels[i] for i in zero] if labels is not None else [str(i) for i in zero]
        raise SingularSystemError(what, condition=0.0, null_space=names[:10])

    scaled = matrix / norms
    lu, piv = scipy.linalg.lu_factor(scaled, check_finite=True)
    rcond = reciprocal_condition(lu, np.linalg.norm(scaled, 1))
    if rcond < RCOND_LIMIT:
        raise SingularSystemError(what, condition=rcond)

    solution = scipy.linalg.lu_solve((lu, piv), rhs)
    if solution.ndim == 1:
        return solution / norms
    return solution / norms[:, None]


def pivoted_lstsq(
    design: np.ndarray,
    target: np.ndarray,
    what: str,
    labels: Optional[Sequence[str]] = None,
    rtol: float = 1e-12
) -> np.ndarray:
    """Least squares by QR with column pivoting; refuses rank-deficient designs.

    target may hold several right-hand sides as columns.
    """
    design = np.asarray(design, dtype=float)
    n_cols = design.shape[1]
    q, r, perm = scipy.linalg.qr(design, mode="economic", pivoting=True)
    diagonal = np.abs(np.diag(r))
    if diagonal.size == 0 or diagonal[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(diagonal > rtol * diagonal[0]))
    if rank < n_cols:
        dependent = sorted(perm[rank:].tolist())
        names = [labels[i] for i in dependent] if labels is not None else [str(i) for i in dependent]
        raise RankDeficientError(what, names)

    projected = q.T @ target
    solution_permuted = scipy.linalg.solve_triangular(r, projected)
    solution = np.empty_like(solution_permuted)
    solution[perm] = solution_permuted
    return solution


class StreamingQR:
    """Blocked QR of a tall augmented system [A | b] fed row-block by row-block.

    Keeps only the (n+k) x (n+k) triangular factor, so the full stacked system
    never has to be held in memory.
    """

    def __init__(self, n_cols: int, n_rhs: int):
        self.n_cols = n_cols
        self.n_rhs = n_rhs
        self._r = np.zeros((0, n_cols + n_rhs))

    def add_rows(self, design: np.ndarray, target: np.ndarray) -> None:
        block = np.hstack([np.asarray(design, dtype=float), np.asarray(target, dtype=float).reshape(len(design), -1)])
        stacked = np.vstack([self._r, block])
        self._r = scipy.linalg.qr(stacked, mode="r")[0][: self.n_cols + self.n_rhs]

    def solve(self, what: str, labels: Optional[Sequence[str]] = None, rtol: float = 1e-12) -> np.ndarray:
        r = self._r[: self.n_cols, : self.n_cols]
        rhs = self._r[: self.n_cols, self.n_cols:]
        if r.shape[0] < self.n_cols:
            raise RankDeficientError(what, ["fewer rows than unknowns"])
        # Pivoted re-factorization of the small triangle exposes dependent columns
        _, r_piv, perm = scipy.linalg.qr(r, pivoting=True)
        diagonal = np.abs(np.diag(r_piv))
        rank = int(np.sum(diagonal > rtol * diagonal[0])) if diagonal[0] > 0 else 0
        if rank < self.n_cols:
            dependent = sorted(perm[rank:].tolist())
            names = [labels[i] for i in dependent] if labels is not None else [str(i) for i in dependent]
            raise RankDeficientError(what, names)
        return scipy.linalg.solve_triangular(r, rhs)


def null_space_labels(matrix: np.ndarray, labels: Sequence[str], tol: float = 1e-12, top: int = 5) -> List[str]:
    """Parameter labels with the largest weight in the numerical null space of a symmetric matrix"""
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (matrix + matrix.T))
    scale = max(np.max(np.abs(eigenvalues)), np.finfo(float).tiny)
    null = eigenvectors[:, eigenvalues <= tol * scale]
    if null.shape[1] == 0:
        null = eigenvectors[:, :1]
    weight = np.sum(null ** 2, axis=1)
    order = np.argsort(weight)[::-1][:top]
    return [labels[i] for i in order]


def relative_change(new: np.ndarray, old: np.ndarray) -> float:
    """‖new − old‖ / ‖old‖, with ‖new‖ as fallback scale when old is zero"""
    scale = np.linalg.norm(old)
    if scale == 0.0:
        scale = np.linalg.norm(new)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(new - old) / scale)


def rank_profile(matrix: np.ndarray) -> Tuple[np.ndarray, float]:
    """Normalized singular values and the mass discarded by a rank-one truncation"""
    singular_values = np.linalg.svd(np.asarray(matrix), compute_uv=False)
    if singular_values.size == 0 or singular_values[0] == 0.0:
        return np.zeros_like(singular_values), 0.0
    total = float(np.sum(singular_values ** 2))
    discarded = float(np.sqrt(max(0.0, 1.0 - singular_values[0] ** 2 / total)))
    return singular_values / singular_values[0], discarded
