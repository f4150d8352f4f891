"""Real minimal state-space realization of a modal model"""
import logging
from dataclasses import dataclass
from typing import List, Union

import numpy as np
import scipy.linalg

from core.exceptions import RealnessError, SingularSystemError, ValidationError
from core.validation import FiniteArrayValidator
from services.linalg import RCOND_LIMIT, reciprocal_condition
from services.modal_model import DampingModel, ModalParameters

logger = logging.getLogger(__name__)

# Relative imaginary residue tolerated (and truncated) in B_r, C_r
REALNESS_TOLERANCE = 1e-10

RIGID_BLOCK = np.array([[0.0, 1.0], [0.0, 0.0]])


@dataclass(frozen=True)
class StateSpace:
    """Real (A, B, C, D) with x' = Ax + Bu, y = Cx + Du"""
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "D"):
            value = np.asarray(getattr(self, name))
            if np.iscomplexobj(value):
                raise ValidationError(f"state-space matrix {name} must be real")
            value = np.array(value, dtype=float, ndmin=2)
            FiniteArrayValidator.validate_or_raise(value, f"state-space matrix {name}")
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValidationError(f"A must be square, got {self.A.shape}")
        n_y, n_u = self.D.shape
        if self.B.shape != (n, n_u) or self.C.shape != (n_y, n):
            raise ValidationError(
                f"inconsistent dimensions: A {self.A.shape}, B {self.B.shape}, C {self.C.shape}, D {self.D.shape}"
            )

    @property
    def n_states(self) -> int:
        return int(self.A.shape[0])

    @property
    def n_outputs(self) -> int:
        return int(self.D.shape[0])

    @property
    def n_inputs(self) -> int:
        return int(self.D.shape[1])

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.A) if self.n_states else np.zeros(0, dtype=complex)


def _companion(eigenvalue: complex) -> np.ndarray:
    """[[0, 1], [−|λ|², 2 Re λ]], i.e. [[0, 1], [−ω², −2ζω]]"""
    return np.array([[0.0, 1.0], [-abs(eigenvalue) ** 2, 2.0 * eigenvalue.real]])


def _checked_real(matrix: np.ndarray, what: str, mode: int) -> np.ndarray:
    scale = max(np.max(np.abs(matrix)), np.finfo(float).tiny)
    relative_imag = float(np.max(np.abs(matrix.imag)) / scale)
    if relative_imag > REALNESS_TOLERANCE:
        raise RealnessError(what, mode, relative_imag)
    return matrix.real.copy()


def _general_block(eigenvalue: complex, psi_l: np.ndarray, psi_r: np.ndarray, mode: int):
    transform = np.array([[1.0, 1.0], [eigenvalue, np.conj(eigenvalue)]])
    b_complex = np.vstack([psi_r, np.conj(psi_r)])
    c_complex = np.column_stack([psi_l, np.conj(psi_l)])
    b_real = _checked_real(transform @ b_complex, "input matrix", mode)
    # C_r = C_c T⁻¹ computed as a solve with Tᵀ
    c_real = _checked_real(np.linalg.solve(transform.T, c_complex.T).T, "output matrix", mode)
    return _companion(eigenvalue), b_real, c_real


def _shape_block(phi_l: np.ndarray, phi_r: np.ndarray):
    b_block = np.vstack([np.zeros_like(phi_r), phi_r])
    c_block = np.column_stack([phi_l, np.zeros_like(phi_l)])
    return b_block, c_block


def realize(rho: ModalParameters) -> StateSpace:
    """Block-diagonal real realization with one 2×2 block per rigid-body and flexible mode"""
    a_blocks: List[np.ndarray] = []
    b_blocks: List[np.ndarray] = []
    c_blocks: List[np.ndarray] = []

    for phi_l, phi_r in zip(rho.rigid_left, rho.rigid_right):
        b_block, c_block = _shape_block(phi_l, phi_r)
        a_blocks.append(RIGID_BLOCK)
        b_blocks.append(b_block)
        c_blocks.append(c_block)

    for mode in range(rho.n_flex):
        eigenvalue = rho.eigenvalues[mode]
        if rho.damping_model == DampingModel.GENERAL:
            a_block, b_block, c_block = _general_block(eigenvalue, rho.left[mode], rho.right[mode], mode)
        else:
            a_block = _companion(eigenvalue)
            b_block, c_block = _shape_block(rho.left[mode].real, rho.right[mode].real)
        a_blocks.append(a_block)
        b_blocks.append(b_block)
        c_blocks.append(c_block)

    n_states = 2 * len(a_blocks)
    A = scipy.linalg.block_diag(*a_blocks) if a_blocks else np.zeros((0, 0))
    B = np.vstack(b_blocks) if b_blocks else np.zeros((0, rho.n_inputs))
    C = np.hstack(c_blocks) if c_blocks else np.zeros((rho.n_outputs, 0))
    D = rho.dc_gain if rho.has_dc else np.zeros((rho.n_outputs, rho.n_inputs))

    logger.info(f"Realized {rho.n_rbm} rigid-body and {rho.n_flex} flexible modes with {n_states} states")
    return StateSpace(A.reshape(n_states, n_states), B.reshape(n_states, rho.n_inputs), C.reshape(rho.n_outputs, n_states), D)


def eval_ss(ss: StateSpace, s: Union[complex, np.ndarray]) -> np.ndarray:
    """C(sI − A)⁻¹B + D at s (scalar) or at every entry of an array"""
    scalar = np.ndim(s) == 0
    points = np.atleast_1d(np.asarray(s, dtype=complex))
    values = np.empty((points.size, ss.n_outputs, ss.n_inputs), dtype=complex)
    identity = np.eye(ss.n_states)

    for k, point in enumerate(points):
        if ss.n_states == 0:
            values[k] = ss.D
            continue
        pencil = point * identity - ss.A
        lu, piv = scipy.linalg.lu_factor(pencil, check_finite=True)
        rcond = reciprocal_condition(lu, np.linalg.norm(pencil, 1))
        if rcond < RCOND_LIMIT:
            raise SingularSystemError(f"resolvent sI − A at s={complex(point)}", condition=rcond)
        values[k] = ss.C @ scipy.linalg.lu_solve((lu, piv), ss.B) + ss.D

    return values[0] if scalar else values
