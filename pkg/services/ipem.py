"""Stage-2 projection of the additive estimate onto the modal model set.

svd_init reads eigenvalues off the additive denominators and splits every residue
into its dominant left/right singular directions; gauss_newton then minimizes
(β̂ − f(ρ))ᵀ Σ̂_β⁻¹ (β̂ − f(ρ)) over ρ.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field

from core.exceptions import ConfigurationError, NumericalError, ValidationError
from core.logging import PerformanceLogger
from services.additive_model import AdditiveParameters, SubmodelStructure
from services.linalg import rank_profile, relative_change, symmetric_factor
from services.modal_model import (
    DampingModel,
    ModalParameters,
    from_vector,
    jacobian_f,
    map_f,
    normalize_gauge,
    to_vector,
)
from services.riv import CovarianceEstimate

logger = logging.getLogger(__name__)

performance_logger = PerformanceLogger("modalid.ipem")

# σ_i ≤ this × σ_1 counts as a missing rigid-body direction
RIGID_RANK_THRESHOLD = 1e-10

# Objectives within this many ulps of ‖Lβ̂‖ are rounding noise
OBJECTIVE_FLOOR_ULPS = 100.0


class IpemOptions(BaseModel):
    """Gauss–Newton policy for the weighted projection"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_iterations: int = Field(default=40, ge=1)
    relative_tolerance: float = Field(default=1e-9, gt=0)
    min_step: float = Field(default=2.0 ** -20, gt=0, le=1)
    rank_threshold: float = Field(default=1e-10, gt=0)


class GaussNewtonStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max-iterations"
    STALLED = "stalled"


@dataclass
class GaussNewtonTrace:
    """Per-iteration objective, accepted step length and relative parameter change"""
    objectives: List[float] = field(default_factory=list)
    step_alphas: List[float] = field(default_factory=list)
    relative_changes: List[float] = field(default_factory=list)
    data_costs: List[float] = field(default_factory=list)
    status: GaussNewtonStatus = GaussNewtonStatus.MAX_ITERATIONS
    identity_weighting: bool = False

    @property
    def iterations(self) -> int:
        return len(self.step_alphas)

    @property
    def final_objective(self) -> float:
        return self.objectives[-1]

    def to_records(self) -> List[dict]:
        records = [{"iter": 0, "objective": self.objectives[0], "step_alpha": float("nan"), "param_rel_change": float("nan")}]
        for j, (alpha, change) in enumerate(zip(self.step_alphas, self.relative_changes), start=1):
            records.append({"iter": j, "objective": self.objectives[j], "step_alpha": alpha, "param_rel_change": change})
        return records


@dataclass(frozen=True)
class ResidueProfile:
    """Singular values of one estimated residue, normalized by the largest"""
    kind: str
    index: int
    singular_values: np.ndarray
    discarded_mass: float


def rank_one_approx(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Best rank-one approximation u vᵀ in the Frobenius norm"""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.size == 0 or not np.any(matrix != 0):
        raise ValidationError("rank-one approximation of a zero or empty matrix")
    u, singular_values, vh = np.linalg.svd(matrix, full_matrices=False)
    return singular_values[0] * u[:, 0], vh[0, :]


def _quadratic_eigenvalue(a1: float, a2: float, index: int) -> complex:
    """Upper-half-plane root of 1 + a1 s + a2 s², i.e. of s² + a s + b with b = 1/a2, a = a1/a2"""
    if a2 <= 0.0:
        raise NumericalError(f"flexible submodel {index} has a non-oscillatory denominator", details={"submodel": index})
    b = 1.0 / a2
    a = a1 / a2
    discriminant = b - 0.25 * a * a
    if discriminant <= 0.0:
        raise NumericalError(
            f"flexible submodel {index} has real denominator roots (overdamped)",
            details={"submodel": index, "a1": a1, "a2": a2}
        )
    return complex(-0.5 * a, np.sqrt(discriminant))


def _classify(beta_hat: AdditiveParameters) -> Tuple[Optional[int], List[int], Optional[int]]:
    rigid, flexible, dc = None, [], None
    for i, orders in enumerate(beta_hat.structure.submodels):
        if orders == SubmodelStructure(0, 0, 2):
            rigid = i
        elif orders == SubmodelStructure(2, 1, 0):
            flexible.append(i)
        elif orders == SubmodelStructure(0, 0, 0):
            dc = i
        else:
            raise ConfigurationError(
                f"submodel {i} with orders (n={orders.n_den}, m={orders.n_num}, ℓ={orders.n_int}) has no modal counterpart",
                details={"submodel": i}
            )
    return rigid, flexible, dc


def _flexible_residue(sub, eigenvalue: complex, damping_model: DampingModel) -> np.ndarray:
    """Monic numerator data of a flexible submodel turned into its residue L (general) or R (proportional)"""
    b = 1.0 / sub.denominator[1]
    n0, n1 = sub.numerators[0] * b, sub.numerators[1] * b
    if damping_model == DampingModel.GENERAL:
        return (n0 + eigenvalue * n1) / (eigenvalue - np.conj(eigenvalue))
    return n0


def svd_init(
    beta_hat: AdditiveParameters,
    damping_model: DampingModel = DampingModel.GENERAL,
    n_rbm: int = 0
) -> ModalParameters:
    """Modal initialization from a Stage-1 estimate via dominant singular directions"""
    damping_model = DampingModel(damping_model)
    rigid, flexible, dc = _classify(beta_hat)
    structure = beta_hat.structure
    n_y, n_u = structure.n_outputs, structure.n_inputs

    if n_rbm and rigid is None:
        raise ConfigurationError(f"{n_rbm} rigid-body modes requested but the additive model has no ℓ=2 submodel")
    if rigid is not None and n_rbm == 0:
        raise ConfigurationError("the additive model has a rigid-body submodel but n_rbm is 0")

    eigenvalues, left, right = [], [], []
    for i in flexible:
        sub = beta_hat.submodels[i]
        lam = _quadratic_eigenvalue(sub.denominator[0], sub.denominator[1], i)
        residue = _flexible_residue(sub, lam, damping_model)
        if damping_model == DampingModel.PROPORTIONAL:
            residue = residue.real
        u, v = rank_one_approx(residue)
        eigenvalues.append(lam)
        left.append(u)
        right.append(v)

    rigid_left = np.zeros((n_rbm, n_y))
    rigid_right = np.zeros((n_rbm, n_u))
    if rigid is not None:
        residue = beta_hat.submodels[rigid].numerators[0]
        u, singular_values, vh = np.linalg.svd(residue, full_matrices=False)
        if n_rbm > singular_values.size:
            raise ConfigurationError(f"n_rbm={n_rbm} exceeds min(n_y, n_u)={singular_values.size}")
        scale = singular_values[0] if singular_values[0] > 0 else 1.0
        weak = [i for i in range(n_rbm) if singular_values[i] <= RIGID_RANK_THRESHOLD * scale]
        if weak:
            logger.warning(
                f"Rigid-body residue has rank below n_rbm={n_rbm}; directions {weak} come from negligible singular values"
            )
        for i in range(n_rbm):
            rigid_left[i] = singular_values[i] * u[:, i]
            rigid_right[i] = vh[i, :]
            if singular_values[i] == 0.0:
                rigid_left[i] = u[:, i] * RIGID_RANK_THRESHOLD * scale

    dc_gain = beta_hat.submodels[dc].numerators[0] if dc is not None else None
    rho = ModalParameters(
        damping_model, n_y, n_u, np.asarray(eigenvalues, dtype=complex),
        np.asarray(left).reshape(-1, n_y), np.asarray(right).reshape(-1, n_u),
        rigid_left, rigid_right, dc_gain
    )
    logger.info(f"SVD initialization: {rho.n_rbm} rigid-body and {rho.n_flex} flexible modes ({damping_model.value})")
    return normalize_gauge(rho)


def residue_profiles(
    beta_hat: AdditiveParameters,
    damping_model: DampingModel = DampingModel.GENERAL
) -> List[ResidueProfile]:
    """Normalized singular values and discarded rank-one mass of every estimated residue"""
    damping_model = DampingModel(damping_model)
    rigid, flexible, dc = _classify(beta_hat)
    profiles = []
    if rigid is not None:
        values, discarded = rank_profile(beta_hat.submodels[rigid].numerators[0])
        profiles.append(ResidueProfile("rigid", rigid, values, discarded))
    for mode, i in enumerate(flexible):
        sub = beta_hat.submodels[i]
        lam = _quadratic_eigenvalue(sub.denominator[0], sub.denominator[1], i)
        values, discarded = rank_profile(_flexible_residue(sub, lam, damping_model))
        profiles.append(ResidueProfile("flexible", mode, values, discarded))
    if dc is not None:
        values, discarded = rank_profile(beta_hat.submodels[dc].numerators[0])
        profiles.append(ResidueProfile("dc", dc, values, discarded))
    return profiles


class _Projection:
    """Whitened residual r(ρ) = L(β̂ − f(ρ)) with Lᵀ L = Σ̂_β⁻¹"""

    def __init__(self, beta_hat: np.ndarray, whitening: np.ndarray):
        self.beta_hat = beta_hat
        self.whitening = whitening

    def residual(self, rho: ModalParameters) -> np.ndarray:
        return self.whitening @ (self.beta_hat - map_f(rho).to_vector())

    def objective(self, rho: ModalParameters) -> float:
        value = float(np.sum(self.residual(rho) ** 2))
        if not np.isfinite(value):
            raise NumericalError("non-finite Stage-2 objective")
        return value

    def step(self, rho: ModalParameters, rank_threshold: float) -> np.ndarray:
        """Minimum-norm Gauss–Newton step on column-equilibrated whitened Jacobian"""
        jacobian = self.whitening @ jacobian_f(rho)
        norms = np.linalg.norm(jacobian, axis=0)
        norms[norms == 0.0] = 1.0
        solution, *_ = scipy.linalg.lstsq(jacobian / norms, self.residual(rho), cond=rank_threshold, lapack_driver="gelsd")
        return solution / norms


def gauss_newton(
    beta_hat: np.ndarray,
    sigma_beta: Optional[CovarianceEstimate],
    rho0: ModalParameters,
    opts: Optional[IpemOptions] = None,
    data_cost: Optional[Callable[[ModalParameters], float]] = None
) -> Tuple[ModalParameters, GaussNewtonTrace]:
    """Covariance-weighted projection of β̂ onto the modal model set"""
    opts = opts or IpemOptions()
    beta_hat = np.asarray(beta_hat, dtype=float).reshape(-1)
    rho = normalize_gauge(rho0)
    dimension = map_f(rho).structure.n_parameters
    if beta_hat.size != dimension:
        raise ValidationError(f"β̂ has {beta_hat.size} entries, the modal structure maps to {dimension}")

    trace = GaussNewtonTrace(identity_weighting=sigma_beta is None or sigma_beta.relative_only)
    if sigma_beta is None:
        logger.warning("No parameter covariance available; Stage 2 uses identity weighting")
        whitening = np.eye(dimension)
    else:
        if sigma_beta.dimension != dimension:
            raise ValidationError(f"covariance dimension {sigma_beta.dimension} does not match β̂ ({dimension})")
        whitening = symmetric_factor(sigma_beta.information)

    projection = _Projection(beta_hat, whitening)
    objective = projection.objective(rho)
    trace.objectives.append(objective)
    if data_cost is not None:
        trace.data_costs.append(data_cost(rho))
    logger.info(f"Gauss–Newton start: objective {objective:.6e}, dim ρ = {to_vector(rho).size}")

    floor = (OBJECTIVE_FLOOR_ULPS * np.finfo(float).eps * np.linalg.norm(whitening @ beta_hat)) ** 2
    if objective <= floor:
        trace.status = GaussNewtonStatus.CONVERGED
        return rho, trace

    for iteration in range(1, opts.max_iterations + 1):
        current = to_vector(rho)
        delta = projection.step(rho, opts.rank_threshold)
        if not np.all(np.isfinite(delta)):
            raise NumericalError("non-finite Gauss–Newton step", details={"iteration": iteration})

        alpha, accepted = 1.0, None
        while alpha >= opts.min_step:
            try:
                trial = normalize_gauge(from_vector(rho, current + alpha * delta))
                trial_objective = projection.objective(trial)
            except ValidationError:
                trial_objective = np.inf
            if trial_objective < objective:
                accepted = (trial, trial_objective)
                break
            alpha *= 0.5

        if accepted is None:
            logger.warning(f"Gauss–Newton line search stalled at iteration {iteration}")
            trace.status = GaussNewtonStatus.STALLED
            break

        rho, objective = accepted
        change = relative_change(to_vector(rho), current)
        trace.objectives.append(objective)
        trace.step_alphas.append(alpha)
        trace.relative_changes.append(change)
        if data_cost is not None:
            trace.data_costs.append(data_cost(rho))
        performance_logger.log_iteration("ipem", iteration, objective, step_alpha=alpha, param_rel_change=change)
        logger.info(f"Gauss–Newton iteration {iteration}: objective {objective:.6e}, α={alpha:g}, relative change {change:.3e}")

        if objective <= floor or change < opts.relative_tolerance:
            trace.status = GaussNewtonStatus.CONVERGED
            break

    return rho, trace
