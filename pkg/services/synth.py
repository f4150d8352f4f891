"""Ground-truth generation: random modal and mechanical systems, modal decomposition, noisy FRFs"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.exceptions import ConfigurationError, NumericalError, ValidationError
from core.validation import FiniteArrayValidator, PositiveDefiniteValidator, SymmetricValidator
from services.frf_core import FrequencyGrid, FrfDataset
from services.linalg import vec
from services.modal_model import DampingModel, ModalParameters, eval_modal, normalize_gauge

logger = logging.getLogger(__name__)

MIN_RELATIVE_SEPARATION = 0.05
MAX_DEGREES_OF_FREEDOM = 100
# |λ| below this fraction of the spectral radius (or a K eigenvalue below it relative to ‖K‖) is rigid
RIGID_THRESHOLD = 1e-8
# cond(V) above this marks a defective (non-diagonalizable) pencil
EIGENVECTOR_CONDITION_LIMIT = 1e10
PROPORTIONAL_TOLERANCE = 1e-8


class SynthSpec(BaseModel):
    """Random modal system description"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_outputs: int = Field(ge=1)
    n_inputs: int = Field(ge=1)
    n_rbm: int = Field(default=0, ge=0)
    n_flex: int = Field(default=1, ge=0)
    band_hz: Tuple[float, float] = (1.0, 100.0)
    damping_range: Tuple[float, float] = (0.005, 0.05)
    damping_model: DampingModel = DampingModel.PROPORTIONAL
    noise: float = Field(default=0.0, ge=0.0)
    include_dc: bool = False
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def check_ranges(self) -> "SynthSpec":
        f_lo, f_hi = self.band_hz
        if not (0.0 < f_lo < f_hi):
            raise ValueError(f"band_hz must satisfy 0 < f_lo < f_hi, got {self.band_hz}")
        z_lo, z_hi = self.damping_range
        if not (0.0 < z_lo <= z_hi < 1.0):
            raise ValueError(f"damping_range must satisfy 0 < ζ_lo ≤ ζ_hi < 1, got {self.damping_range}")
        return self


@dataclass(frozen=True)
class MechanicalSystem:
    """M q'' + D q' + K q = F u, y = Q q"""
    M: np.ndarray
    D: np.ndarray
    K: np.ndarray
    F: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        for name in ("M", "D", "K", "F", "Q"):
            value = np.array(getattr(self, name), dtype=float, ndmin=2)
            FiniteArrayValidator.validate_or_raise(value, name)
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        n = self.M.shape[0]
        if self.M.shape != (n, n) or self.D.shape != (n, n) or self.K.shape != (n, n):
            raise ValidationError("M, D and K must be square of equal size")
        if self.F.shape[0] != n or self.Q.shape[1] != n:
            raise ValidationError(f"F must have {n} rows and Q {n} columns")
        SymmetricValidator.validate_or_raise(self.M, "mass matrix")
        PositiveDefiniteValidator.validate_or_raise(self.M, "mass matrix")
        SymmetricValidator.validate_or_raise(self.K, "stiffness matrix")
        eigenvalues = np.linalg.eigvalsh(self.K)
        if eigenvalues[0] < -1e-10 * max(np.linalg.norm(self.K), np.finfo(float).tiny):
            raise ValidationError("stiffness matrix is not positive semi-definite")

    @property
    def n_dof(self) -> int:
        return int(self.M.shape[0])

    def transfer(self, s: complex) -> np.ndarray:
        """Q (M s² + D s + K)⁻¹ F by direct solve"""
        return self.Q @ np.linalg.solve(self.M * s * s + self.D * s + self.K, self.F)


def _unit_vectors(rng: np.random.Generator, count: int, size: int, complex_valued: bool) -> np.ndarray:
    vectors = rng.standard_normal((count, size))
    if complex_valued:
        vectors = vectors + 1j * rng.standard_normal((count, size))
    return vectors / np.linalg.norm(vectors, axis=1, keepdims=True)


def _separated_frequencies(rng: np.random.Generator, count: int, band: Tuple[float, float]) -> np.ndarray:
    """Log-uniform frequencies with consecutive ratios of at least 1 + MIN_RELATIVE_SEPARATION"""
    if count == 0:
        return np.zeros(0)
    log_width = np.log(band[1] / band[0])
    gap = np.log1p(MIN_RELATIVE_SEPARATION)
    slack = log_width - (count - 1) * gap
    if slack < 0.0:
        raise ConfigurationError(
            f"band {band} Hz cannot hold {count} modes with {MIN_RELATIVE_SEPARATION:.0%} separation",
            details={"band_hz": list(band), "n_flex": count}
        )
    offsets = np.sort(rng.uniform(0.0, slack, size=count))
    return band[0] * np.exp(offsets + gap * np.arange(count))


def random_modal_system(spec: SynthSpec) -> ModalParameters:
    """Random gauge-normalized modal model; deterministic in spec.seed"""
    rng = np.random.default_rng(spec.seed)
    general = spec.damping_model == DampingModel.GENERAL

    frequencies_hz = _separated_frequencies(rng, spec.n_flex, spec.band_hz)
    zetas = rng.uniform(spec.damping_range[0], spec.damping_range[1], size=spec.n_flex)
    left = _unit_vectors(rng, spec.n_flex, spec.n_outputs, general)
    right = _unit_vectors(rng, spec.n_flex, spec.n_inputs, general)
    rigid_left = _unit_vectors(rng, spec.n_rbm, spec.n_outputs, False)
    rigid_right = _unit_vectors(rng, spec.n_rbm, spec.n_inputs, False)
    dc_gain = 0.1 * rng.standard_normal((spec.n_outputs, spec.n_inputs)) if spec.include_dc else None

    sizes = {"n_outputs": spec.n_outputs, "n_inputs": spec.n_inputs}
    omegas = 2.0 * np.pi * frequencies_hz
    if general:
        eigenvalues = -zetas * omegas + 1j * omegas * np.sqrt(1.0 - zetas ** 2)
        rho = ModalParameters.general(eigenvalues, left, right, rigid_left, rigid_right, dc_gain, **sizes)
    else:
        rho = ModalParameters.proportional(omegas, zetas, left, right, rigid_left, rigid_right, dc_gain, **sizes)

    logger.info(f"Generated {spec.damping_model.value} modal system: {spec.n_rbm} rigid, {spec.n_flex} flexible modes")
    return normalize_gauge(rho)


def _rigid_subspace(system: MechanicalSystem) -> np.ndarray:
    """M-orthonormal basis of the stiffness nullspace"""
    basis = scipy.linalg.null_space(system.K, rcond=RIGID_THRESHOLD)
    if basis.shape[1] == 0:
        return basis
    factor = scipy.linalg.cholesky(basis.T @ system.M @ basis, lower=True)
    return scipy.linalg.solve_triangular(factor, basis.T, lower=True).T


def _split_rigid(system: MechanicalSystem):
    """Rigid shapes plus the flexible system restricted to the M-orthogonal complement"""
    rigid = _rigid_subspace(system)
    if rigid.shape[1] == 0:
        return np.zeros((0, system.Q.shape[0])), np.zeros((0, system.F.shape[1])), system

    damping_scale = max(np.linalg.norm(system.D), np.finfo(float).tiny)
    if (np.linalg.norm(system.D @ rigid) > 1e-10 * damping_scale
            or np.linalg.norm(rigid.T @ system.D) > 1e-10 * damping_scale):
        raise NumericalError("damping couples into the rigid-body subspace; damped rigid motion is not supported")

    rigid_left = (system.Q @ rigid).T
    rigid_right = (system.F.T @ rigid).T
    complement = scipy.linalg.null_space((system.M @ rigid).T)
    if complement.shape[1] == 0:
        return rigid_left, rigid_right, None
    reduced = MechanicalSystem(
        M=complement.T @ system.M @ complement,
        D=complement.T @ system.D @ complement,
        K=complement.T @ system.K @ complement,
        F=complement.T @ system.F,
        Q=system.Q @ complement
    )
    return rigid_left, rigid_right, reduced


def _general_modes(system: MechanicalSystem):
    n = system.n_dof
    zeros = np.zeros((n, n))
    E = np.block([[system.D, system.M], [system.M, zeros]])
    A = np.block([[-system.K, zeros], [zeros, system.M]])
    B = np.vstack([system.F, np.zeros_like(system.F)])
    C = np.hstack([system.Q, np.zeros_like(system.Q)])

    factor = scipy.linalg.lu_factor(E)
    eigenvalues, V = np.linalg.eig(scipy.linalg.lu_solve(factor, A))
    # vᵀ E v = 1
    V = V / np.sqrt(np.einsum("ik,ij,jk->k", V, E, V))[None, :]
    if np.linalg.cond(V) > EIGENVECTOR_CONDITION_LIMIT:
        raise NumericalError("defective eigenstructure: eigenvectors are numerically dependent")

    radius = max(np.max(np.abs(eigenvalues)), np.finfo(float).tiny)
    real = np.abs(eigenvalues.imag) <= RIGID_THRESHOLD * radius
    if np.any(real):
        raise NumericalError(
            f"{int(np.sum(real))} real eigenvalue(s) in the flexible part; overdamped modes are not supported",
            details={"eigenvalues": [str(value) for value in eigenvalues[real]]}
        )
    upper = np.flatnonzero(eigenvalues.imag > 0)
    if upper.size * 2 != eigenvalues.size:
        raise NumericalError("complex eigenvalues do not form conjugate pairs")

    left = (C @ V).T
    right = np.linalg.solve(V, scipy.linalg.lu_solve(factor, B))
    order = upper[np.argsort(np.abs(eigenvalues[upper]))]
    return eigenvalues[order], left[order], right[order]


def _proportional_modes(system: MechanicalSystem, full: MechanicalSystem):
    basis = np.column_stack([full.M.reshape(-1), full.K.reshape(-1)])
    coefficients, *_ = np.linalg.lstsq(basis, full.D.reshape(-1), rcond=None)
    misfit = np.linalg.norm(basis @ coefficients - full.D.reshape(-1))
    if misfit > PROPORTIONAL_TOLERANCE * max(np.linalg.norm(full.D), np.finfo(float).tiny):
        raise ConfigurationError("damping matrix is not of the form αM + βK")
    alpha, beta = coefficients

    omega_squared, shapes = scipy.linalg.eigh(system.K, system.M)
    if np.any(omega_squared <= 0.0):
        raise NumericalError("non-positive stiffness eigenvalue in the flexible subspace")
    omegas = np.sqrt(omega_squared)
    zetas = 0.5 * (alpha / omegas + beta * omegas)
    if np.any((zetas <= 0.0) | (zetas >= 1.0)):
        raise NumericalError("Rayleigh damping gives a mode outside the underdamped range", details={"zetas": zetas.tolist()})
    return omegas, zetas, (system.Q @ shapes).T, (system.F.T @ shapes).T


def mech_to_modal(system: MechanicalSystem, damping: DampingModel = DampingModel.GENERAL) -> ModalParameters:
    """Modal decomposition of a second-order mechanical system"""
    damping = DampingModel(damping)
    if system.n_dof > MAX_DEGREES_OF_FREEDOM:
        raise ConfigurationError(f"mechanical systems are limited to {MAX_DEGREES_OF_FREEDOM} degrees of freedom")

    rigid_left, rigid_right, flexible = _split_rigid(system)
    sizes = {"n_outputs": system.Q.shape[0], "n_inputs": system.F.shape[1]}
    if flexible is None:
        rho = ModalParameters.general([], [], [], rigid_left, rigid_right, **sizes).replace(damping_model=damping)
    elif damping == DampingModel.GENERAL:
        eigenvalues, left, right = _general_modes(flexible)
        rho = ModalParameters.general(eigenvalues, left, right, rigid_left, rigid_right, **sizes)
    else:
        omegas, zetas, left, right = _proportional_modes(flexible, system)
        rho = ModalParameters.proportional(omegas, zetas, left, right, rigid_left, rigid_right, **sizes)

    logger.info(f"Mechanical system with {system.n_dof} DOF: {rho.n_rbm} rigid-body and {rho.n_flex} flexible modes")
    return normalize_gauge(rho)


def random_mechanical_system(
    n: int,
    n_inputs: int,
    n_outputs: int,
    damping: DampingModel = DampingModel.GENERAL,
    seed: int = 0,
    n_rigid: int = 0
) -> MechanicalSystem:
    """Well-separated random system built from a known modal basis"""
    damping = DampingModel(damping)
    if not 0 <= n_rigid < n:
        raise ConfigurationError("n_rigid must be non-negative and smaller than n")
    rng = np.random.default_rng(seed)

    orthogonal, _ = np.linalg.qr(rng.standard_normal((n, n)))
    basis = orthogonal * rng.uniform(0.5, 2.0, size=n)[None, :]      # Φ with ΦᵀMΦ = I
    inverse = np.linalg.inv(basis)

    n_flex = n - n_rigid
    omegas = np.concatenate([np.zeros(n_rigid), 1.3 ** np.arange(n_flex) * rng.uniform(1.0, 1.1, size=n_flex)])
    zetas = np.concatenate([np.zeros(n_rigid), rng.uniform(0.01, 0.05, size=n_flex)])

    M = inverse.T @ inverse
    K = inverse.T @ np.diag(omegas ** 2) @ inverse
    if damping == DampingModel.PROPORTIONAL:
        alpha = 0.0 if n_rigid else 0.01
        beta = 0.01
        D = alpha * M + beta * K
    else:
        modal_damping = np.diag(2.0 * zetas * omegas)
        coupling = 0.1 * rng.standard_normal((n_flex, n_flex)) * np.sqrt(np.outer(2.0 * zetas[n_rigid:] * omegas[n_rigid:], 2.0 * zetas[n_rigid:] * omegas[n_rigid:]))
        modal_damping[n_rigid:, n_rigid:] += 0.5 * (coupling + coupling.T)
        D = inverse.T @ modal_damping @ inverse

    F = rng.standard_normal((n, n_inputs))
    Q = rng.standard_normal((n_outputs, n))
    return MechanicalSystem(0.5 * (M + M.T), 0.5 * (D + D.T), 0.5 * (K + K.T), F, Q)


def simulate_frf(rho_true: ModalParameters, grid: FrequencyGrid, noise: float = 0.0, seed: int = 0) -> FrfDataset:
    """Exact FRF plus element-wise relative circular complex Gaussian noise; Σ_G holds the exact variances"""
    if noise < 0.0:
        raise ValidationError("noise level must be non-negative")
    exact = eval_modal(rho_true, grid.s)
    std = noise * np.abs(exact)
    rng = np.random.default_rng(seed)
    perturbation = std * (rng.standard_normal(exact.shape) + 1j * rng.standard_normal(exact.shape)) / np.sqrt(2.0)

    variances = vec(std ** 2)
    covariance = np.zeros((grid.n_points, variances.shape[1], variances.shape[1]), dtype=complex)
    index = np.arange(variances.shape[1])
    covariance[:, index, index] = variances
    logger.info(f"Simulated FRF on {grid.n_points} frequencies with relative noise {noise:g}")
    return FrfDataset(grid, exact + perturbation, covariance)
