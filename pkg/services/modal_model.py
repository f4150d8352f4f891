"""Modal parameterizations, transfer evaluation and the modal → additive parameter map.

Rigid-body modes contribute φ_l φ_rᵀ / s². A general-damping flexible mode is stored
by its upper-half-plane eigenvalue λ and complex shapes (ψ_l, ψ_r) and contributes
L/(s − λ) + L̄/(s − λ̄) with L = ψ_l ψ_rᵀ. A proportional mode is stored by (ω, ζ)
and real shapes and contributes φ_l φ_rᵀ / (s² + 2ζωs + ω²).

The real parameter vector ρ is laid out as: per rigid mode [φ_l, φ_r]; per general
mode [Re λ, Im λ, Re ψ_l, Im ψ_l, Re ψ_r, Im ψ_r]; per proportional mode
[ω, ζ, φ_l, φ_r]; then vec(dc_gain) when present.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple, Union

import numpy as np

from core.exceptions import PoleEvaluationError, ValidationError
from core.validation import FiniteArrayValidator
from services.additive_model import (
    AdditiveParameters,
    AdditiveStructure,
    SubmodelParameters,
    SubmodelStructure,
)
from services.linalg import unvec, vec

logger = logging.getLogger(__name__)

# |s − pole| below this fraction of max(|s|, |pole|, 1) is evaluation at a pole
POLE_TOLERANCE = 1e-14


class DampingModel(str, Enum):
    GENERAL = "general"
    PROPORTIONAL = "proportional"


def _real_matrix(values, n_cols: int, name: str) -> np.ndarray:
    array = np.array(values if values is not None else np.zeros((0, n_cols)), dtype=float).reshape(-1, n_cols)
    FiniteArrayValidator.validate_or_raise(array, name)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ModalParameters:
    """Modal model ρ.

    eigenvalues holds the upper-half-plane λ_i for both damping models; for
    proportional damping it is derived from (ω_i, ζ_i) and the shapes are real.
    Shapes are stored row-wise: left (n_flex, n_y), right (n_flex, n_u).
    """
    damping_model: DampingModel
    n_outputs: int
    n_inputs: int
    eigenvalues: np.ndarray
    left: np.ndarray
    right: np.ndarray
    rigid_left: np.ndarray
    rigid_right: np.ndarray
    dc_gain: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "damping_model", DampingModel(self.damping_model))
        n_y, n_u = self.n_outputs, self.n_inputs
        if n_y < 1 or n_u < 1:
            raise ValidationError("modal model needs at least one output and one input")

        shape_dtype = complex if self.damping_model == DampingModel.GENERAL else float
        eigenvalues = np.array(self.eigenvalues, dtype=complex).reshape(-1)
        left = np.array(self.left, dtype=complex).reshape(-1, n_y)
        right = np.array(self.right, dtype=complex).reshape(-1, n_u)
        if not (eigenvalues.size == left.shape[0] == right.shape[0]):
            raise ValidationError("flexible eigenvalues and mode shapes have inconsistent counts")
        FiniteArrayValidator.validate_or_raise(eigenvalues, "eigenvalues")
        FiniteArrayValidator.validate_or_raise(left, "left mode shapes")
        FiniteArrayValidator.validate_or_raise(right, "right mode shapes")

        for i, lam in enumerate(eigenvalues):
            if not (lam.real < 0.0 and lam.imag > 0.0):
                raise ValidationError(
                    f"flexible mode {i}: eigenvalue {lam} must satisfy Re λ < 0 < Im λ",
                    details={"mode": i}
                )
        if shape_dtype is float:
            if np.any(left.imag != 0) or np.any(right.imag != 0):
                raise ValidationError("proportional damping requires real mode shapes")
            left, right = left.real.copy(), right.real.copy()

        for name, value in (("eigenvalues", eigenvalues), ("left", left), ("right", right)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

        rigid_left = _real_matrix(self.rigid_left, n_y, "rigid left shapes")
        rigid_right = _real_matrix(self.rigid_right, n_u, "rigid right shapes")
        if rigid_left.shape[0] != rigid_right.shape[0]:
            raise ValidationError("rigid-body left and right shapes have inconsistent counts")
        object.__setattr__(self, "rigid_left", rigid_left)
        object.__setattr__(self, "rigid_right", rigid_right)

        if self.dc_gain is not None:
            dc_gain = np.array(self.dc_gain, dtype=float)
            if dc_gain.shape != (n_y, n_u):
                raise ValidationError(f"dc_gain must have shape {(n_y, n_u)}, got {dc_gain.shape}")
            FiniteArrayValidator.validate_or_raise(dc_gain, "dc_gain")
            dc_gain.setflags(write=False)
            object.__setattr__(self, "dc_gain", dc_gain)

    @classmethod
    def general(cls, eigenvalues, left, right, rigid_left=None, rigid_right=None, dc_gain=None,
                n_outputs: Optional[int] = None, n_inputs: Optional[int] = None) -> "ModalParameters":
        n_y, n_u = _infer_sizes(left, right, rigid_left, rigid_right, dc_gain, n_outputs, n_inputs)
        return cls(DampingModel.GENERAL, n_y, n_u, eigenvalues, left, right, rigid_left, rigid_right, dc_gain)

    @classmethod
    def proportional(cls, omegas, zetas, left, right, rigid_left=None, rigid_right=None, dc_gain=None,
                     n_outputs: Optional[int] = None, n_inputs: Optional[int] = None) -> "ModalParameters":
        n_y, n_u = _infer_sizes(left, right, rigid_left, rigid_right, dc_gain, n_outputs, n_inputs)
        eigenvalues = [eigenvalue_from(w, z) for w, z in zip(np.atleast_1d(omegas), np.atleast_1d(zetas))]
        return cls(DampingModel.PROPORTIONAL, n_y, n_u, eigenvalues, left, right, rigid_left, rigid_right, dc_gain)

    @property
    def n_rbm(self) -> int:
        return int(self.rigid_left.shape[0])

    @property
    def n_flex(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def has_dc(self) -> bool:
        return self.dc_gain is not None

    @property
    def omegas(self) -> np.ndarray:
        return np.abs(self.eigenvalues)

    @property
    def zetas(self) -> np.ndarray:
        return -self.eigenvalues.real / np.abs(self.eigenvalues)

    def natural_frequencies_hz(self) -> np.ndarray:
        return self.omegas / (2.0 * np.pi)

    def damping_ratios(self) -> np.ndarray:
        return self.zetas

    def residues(self) -> np.ndarray:
        """Flexible residues L_i (general) or R_i (proportional), shape (n_flex, n_y, n_u)"""
        return self.left[:, :, None] * self.right[:, None, :]

    def rigid_residue(self) -> np.ndarray:
        """Σ φ_l φ_rᵀ over the rigid-body modes"""
        return self.rigid_left.T @ self.rigid_right

    def replace(self, **changes) -> "ModalParameters":
        values = {
            "damping_model": self.damping_model, "n_outputs": self.n_outputs, "n_inputs": self.n_inputs,
            "eigenvalues": self.eigenvalues, "left": self.left, "right": self.right,
            "rigid_left": self.rigid_left, "rigid_right": self.rigid_right, "dc_gain": self.dc_gain,
        }
        values.update(changes)
        return ModalParameters(**values)


def _infer_sizes(left, right, rigid_left, rigid_right, dc_gain, n_outputs, n_inputs) -> Tuple[int, int]:
    if n_outputs is None:
        for candidate in (left, rigid_left, dc_gain):
            if candidate is not None and np.size(candidate):
                n_outputs = np.shape(candidate)[-1] if candidate is not dc_gain else np.shape(candidate)[0]
                break
    if n_inputs is None:
        for candidate in (right, rigid_right, dc_gain):
            if candidate is not None and np.size(candidate):
                n_inputs = np.shape(candidate)[-1]
                break
    if n_outputs is None or n_inputs is None:
        raise ValidationError("cannot infer model dimensions from empty shapes; pass n_outputs and n_inputs")
    return int(n_outputs), int(n_inputs)


def eigenvalue_from(omega: float, zeta: float) -> complex:
    """λ = −ζω + jω√(1 − ζ²) for an underdamped mode"""
    if not (np.isfinite(omega) and omega > 0.0):
        raise ValidationError(f"natural frequency must be positive, got {omega}")
    if not (0.0 < zeta < 1.0):
        raise ValidationError(f"damping ratio must lie in (0, 1), got {zeta}")
    return complex(-zeta * omega, omega * np.sqrt(1.0 - zeta * zeta))


def natural_frequency_and_damping(eigenvalue: complex) -> Tuple[float, float]:
    magnitude = abs(eigenvalue)
    return magnitude, -eigenvalue.real / magnitude


def _check_poles(s: np.ndarray, poles: np.ndarray, component: str) -> None:
    for i, pole in enumerate(poles):
        distance = np.abs(s - pole)
        scale = np.maximum(np.maximum(np.abs(s), abs(pole)), 1.0)
        hit = distance <= POLE_TOLERANCE * scale
        if np.any(hit):
            raise PoleEvaluationError(component, i, complex(s[np.argmax(hit)]))


def eval_modal(rho: ModalParameters, s: Union[complex, np.ndarray]) -> np.ndarray:
    """Transfer matrix of the modal model at s (scalar) or at every entry of an array"""
    scalar = np.ndim(s) == 0
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    total = np.zeros((s.size, rho.n_outputs, rho.n_inputs), dtype=complex)

    if rho.n_rbm:
        _check_poles(s, np.zeros(1), "rigid-body block")
        total += rho.rigid_residue()[None] / (s ** 2)[:, None, None]

    if rho.n_flex:
        _check_poles(s, rho.eigenvalues, "flexible mode")
        _check_poles(s, np.conj(rho.eigenvalues), "flexible mode")
        residues = rho.residues()
        if rho.damping_model == DampingModel.GENERAL:
            first = 1.0 / (s[:, None] - rho.eigenvalues[None, :])
            second = 1.0 / (s[:, None] - np.conj(rho.eigenvalues)[None, :])
            total += np.einsum("ki,iab->kab", first, residues) + np.einsum("ki,iab->kab", second, np.conj(residues))
        else:
            a, b = -2.0 * rho.eigenvalues.real, np.abs(rho.eigenvalues) ** 2
            factor = 1.0 / (s[:, None] ** 2 + a[None, :] * s[:, None] + b[None, :])
            total += np.einsum("ki,iab->kab", factor, residues)

    if rho.has_dc:
        total += rho.dc_gain[None]
    return total[0] if scalar else total


def monic_flexible_block(rho: ModalParameters, mode: int) -> np.ndarray:
    """[λλ̄, −(λ+λ̄), vec(N₀), vec(N₁)] of the real second-order form (N₁s + N₀)/(s² + a s + b)"""
    lam = rho.eigenvalues[mode]
    residue = vec(rho.residues()[mode])
    if rho.damping_model == DampingModel.GENERAL:
        n1 = 2.0 * residue.real
        n0 = -2.0 * (np.conj(lam) * residue).real
    else:
        n1 = np.zeros(residue.size)
        n0 = residue.real
    return np.concatenate([[abs(lam) ** 2, -2.0 * lam.real], n0, n1])


def monic_flexible_jacobian(rho: ModalParameters, mode: int) -> np.ndarray:
    """∂ monic_flexible_block / ∂ρ_mode, shape (2 + 2d, mode parameter count)"""
    n_y, n_u = rho.n_outputs, rho.n_inputs
    d = n_y * n_u
    lam = rho.eigenvalues[mode]
    psi_l, psi_r = rho.left[mode], rho.right[mode]
    eye_y, eye_u = np.eye(n_y), np.eye(n_u)
    d_left = np.kron(psi_r[:, None], eye_y)       # ∂vec(ψ_l ψ_rᵀ)/∂ψ_l
    d_right = np.kron(eye_u, psi_l[:, None])      # ∂vec(ψ_l ψ_rᵀ)/∂ψ_r

    if rho.damping_model == DampingModel.PROPORTIONAL:
        omega, zeta = natural_frequency_and_damping(lam)
        jac = np.zeros((2 + 2 * d, 2 + n_y + n_u))
        jac[0, 0] = 2.0 * omega
        jac[1, 0], jac[1, 1] = 2.0 * zeta, 2.0 * omega
        jac[2:2 + d, 2:2 + n_y] = d_left.real
        jac[2:2 + d, 2 + n_y:] = d_right.real
        return jac

    residue = vec(np.outer(psi_l, psi_r))
    jac = np.zeros((2 + 2 * d, 2 + 2 * n_y + 2 * n_u))
    jac[0, 0], jac[0, 1] = 2.0 * lam.real, 2.0 * lam.imag
    jac[1, 0] = -2.0
    n0, n1 = slice(2, 2 + d), slice(2 + d, 2 + 2 * d)
    jac[n0, 0] = -2.0 * residue.real
    jac[n0, 1] = -2.0 * residue.imag

    # columns: Re ψ_l, Im ψ_l, Re ψ_r, Im ψ_r; an imaginary direction multiplies by j
    columns = (
        (slice(2, 2 + n_y), d_left),
        (slice(2 + n_y, 2 + 2 * n_y), 1j * d_left),
        (slice(2 + 2 * n_y, 2 + 2 * n_y + n_u), d_right),
        (slice(2 + 2 * n_y + n_u, 2 + 2 * n_y + 2 * n_u), 1j * d_right),
    )
    for cols, derivative in columns:
        jac[n1, cols] = 2.0 * derivative.real
        jac[n0, cols] = -2.0 * (np.conj(lam) * derivative).real
    return jac


def _normalization_jacobian(monic: np.ndarray) -> np.ndarray:
    """∂[a/b, 1/b, N₀/b, N₁/b] / ∂[b, a, N₀, N₁]"""
    b, a, numerators = monic[0], monic[1], monic[2:]
    size = monic.size
    jac = np.zeros((size, size))
    jac[0, 0], jac[0, 1] = -a / b ** 2, 1.0 / b
    jac[1, 0] = -1.0 / b ** 2
    jac[2:, 0] = -numerators / b ** 2
    jac[2:, 2:] = np.eye(size - 2) / b
    return jac


def _normalize_monic(monic: np.ndarray) -> np.ndarray:
    b, a = monic[0], monic[1]
    return np.concatenate([[a / b, 1.0 / b], monic[2:] / b])


def additive_structure(rho: ModalParameters) -> AdditiveStructure:
    """Rigid-body submodel (ℓ=2), one (2, 1, 0) submodel per flexible mode, optional biproper DC term"""
    submodels = []
    if rho.n_rbm:
        submodels.append(SubmodelStructure(0, 0, 2))
    submodels.extend(SubmodelStructure(2, 1, 0) for _ in range(rho.n_flex))
    if rho.has_dc:
        submodels.append(SubmodelStructure(0, 0, 0))
    return AdditiveStructure(rho.n_outputs, rho.n_inputs, tuple(submodels))


def map_f(rho: ModalParameters) -> AdditiveParameters:
    """Modal → additive parameters with denominators normalized to a unit constant term"""
    structure = additive_structure(rho)
    n_y, n_u = rho.n_outputs, rho.n_inputs
    submodels = []
    if rho.n_rbm:
        submodels.append(SubmodelParameters(np.zeros(0), rho.rigid_residue()[None]))
    for mode in range(rho.n_flex):
        beta = _normalize_monic(monic_flexible_block(rho, mode))
        d = n_y * n_u
        numerators = unvec(beta[2:].reshape(2, d), n_y, n_u)
        submodels.append(SubmodelParameters(beta[:2], numerators))
    if rho.has_dc:
        submodels.append(SubmodelParameters(np.zeros(0), rho.dc_gain[None]))
    return AdditiveParameters(structure, tuple(submodels))


def _mode_parameter_count(rho: ModalParameters) -> int:
    if rho.damping_model == DampingModel.GENERAL:
        return 2 + 2 * rho.n_outputs + 2 * rho.n_inputs
    return 2 + rho.n_outputs + rho.n_inputs


def parameter_dimension(rho: ModalParameters) -> int:
    d = rho.n_outputs * rho.n_inputs
    return (
        rho.n_rbm * (rho.n_outputs + rho.n_inputs)
        + rho.n_flex * _mode_parameter_count(rho)
        + (d if rho.has_dc else 0)
    )


def jacobian_f(rho: ModalParameters) -> np.ndarray:
    """Block-diagonal ∂β/∂ρᵀ in the fixed ρ and β layouts"""
    n_y, n_u = rho.n_outputs, rho.n_inputs
    d = n_y * n_u
    structure = additive_structure(rho)
    jac = np.zeros((structure.n_parameters, parameter_dimension(rho)))
    row, col = 0, 0

    if rho.n_rbm:
        # S = [φ_r⊗I, I⊗φ_l] per rigid mode
        for phi_l, phi_r in zip(rho.rigid_left, rho.rigid_right):
            jac[row:row + d, col:col + n_y] = np.kron(phi_r[:, None], np.eye(n_y))
            jac[row:row + d, col + n_y:col + n_y + n_u] = np.kron(np.eye(n_u), phi_l[:, None])
            col += n_y + n_u
        row += d

    width = _mode_parameter_count(rho)
    for mode in range(rho.n_flex):
        monic = monic_flexible_block(rho, mode)
        block = _normalization_jacobian(monic) @ monic_flexible_jacobian(rho, mode)
        jac[row:row + monic.size, col:col + width] = block
        row += monic.size
        col += width

    if rho.has_dc:
        jac[row:row + d, col:col + d] = np.eye(d)
    return jac


def normalize_gauge(rho: ModalParameters) -> ModalParameters:
    """Unit-norm left shapes whose largest-magnitude entry is real positive; residues unchanged"""

    def rescale(left: np.ndarray, right: np.ndarray, what: str):
        left, right = left.copy(), right.copy()
        for i in range(left.shape[0]):
            norm = np.linalg.norm(left[i])
            if norm == 0.0:
                raise ValidationError(f"{what} {i} has a zero left mode shape", details={"mode": i})
            pivot = left[i][np.argmax(np.abs(left[i]))]
            alpha = norm * pivot / abs(pivot)
            left[i] = left[i] / alpha
            right[i] = right[i] * alpha
        return left, right

    flex_left, flex_right = rescale(rho.left, rho.right, "flexible mode")
    rigid_left, rigid_right = rescale(rho.rigid_left, rho.rigid_right, "rigid-body mode")
    return rho.replace(left=flex_left, right=flex_right, rigid_left=rigid_left, rigid_right=rigid_right)


def to_vector(rho: ModalParameters) -> np.ndarray:
    """Flat real ρ in the module layout"""
    parts: List[np.ndarray] = []
    for phi_l, phi_r in zip(rho.rigid_left, rho.rigid_right):
        parts.extend([phi_l, phi_r])
    for mode in range(rho.n_flex):
        lam, psi_l, psi_r = rho.eigenvalues[mode], rho.left[mode], rho.right[mode]
        if rho.damping_model == DampingModel.GENERAL:
            parts.extend([[lam.real, lam.imag], psi_l.real, psi_l.imag, psi_r.real, psi_r.imag])
        else:
            parts.extend([natural_frequency_and_damping(lam), psi_l.real, psi_r.real])
    if rho.has_dc:
        parts.append(vec(rho.dc_gain))
    if not parts:
        return np.zeros(0)
    return np.concatenate([np.asarray(part, dtype=float).reshape(-1) for part in parts])


def from_vector(template: ModalParameters, vector: np.ndarray) -> ModalParameters:
    """Rebuild ρ with the shape of template; raises ValidationError outside the valid domain"""
    vector = np.asarray(vector, dtype=float).reshape(-1)
    if vector.size != parameter_dimension(template):
        raise ValidationError(f"ρ has {vector.size} entries, the model needs {parameter_dimension(template)}")
    n_y, n_u = template.n_outputs, template.n_inputs
    cursor = 0

    def take(count: int) -> np.ndarray:
        nonlocal cursor
        part = vector[cursor:cursor + count]
        cursor += count
        return part

    rigid_left = np.empty((template.n_rbm, n_y))
    rigid_right = np.empty((template.n_rbm, n_u))
    for i in range(template.n_rbm):
        rigid_left[i], rigid_right[i] = take(n_y), take(n_u)

    general = template.damping_model == DampingModel.GENERAL
    dtype = complex if general else float
    eigenvalues = np.empty(template.n_flex, dtype=complex)
    left = np.empty((template.n_flex, n_y), dtype=dtype)
    right = np.empty((template.n_flex, n_u), dtype=dtype)
    for i in range(template.n_flex):
        if general:
            re, im = take(2)
            eigenvalues[i] = complex(re, im)
            left[i] = take(n_y) + 1j * take(n_y)
            right[i] = take(n_u) + 1j * take(n_u)
        else:
            omega, zeta = take(2)
            eigenvalues[i] = eigenvalue_from(omega, zeta)
            left[i], right[i] = take(n_y), take(n_u)

    dc_gain = unvec(take(n_y * n_u), n_y, n_u) if template.has_dc else None
    return template.replace(
        eigenvalues=eigenvalues, left=left, right=right,
        rigid_left=rigid_left, rigid_right=rigid_right, dc_gain=dc_gain
    )


def parameter_labels(rho: ModalParameters) -> List[str]:
    labels = []
    for i in range(rho.n_rbm):
        labels.extend(f"rbm{i}.phi_l[{r + 1}]" for r in range(rho.n_outputs))
        labels.extend(f"rbm{i}.phi_r[{c + 1}]" for c in range(rho.n_inputs))
    for i in range(rho.n_flex):
        if rho.damping_model == DampingModel.GENERAL:
            labels.extend([f"mode{i}.re_lambda", f"mode{i}.im_lambda"])
            for part in ("re", "im"):
                labels.extend(f"mode{i}.{part}_psi_l[{r + 1}]" for r in range(rho.n_outputs))
            for part in ("re", "im"):
                labels.extend(f"mode{i}.{part}_psi_r[{c + 1}]" for c in range(rho.n_inputs))
        else:
            labels.extend([f"mode{i}.omega", f"mode{i}.zeta"])
            labels.extend(f"mode{i}.phi_l[{r + 1}]" for r in range(rho.n_outputs))
            labels.extend(f"mode{i}.phi_r[{c + 1}]" for c in range(rho.n_inputs))
    if rho.has_dc:
        labels.extend(f"dc[{r + 1},{c + 1}]" for c in range(rho.n_inputs) for r in range(rho.n_outputs))
    return labels
