"""Stage-1 estimation: numerator initialization, refined instrumental variable iterations,
stability enforcement and parameter covariance"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from core.exceptions import ConfigurationError, NumericalError, SingularSystemError, ValidationError
from core.logging import PerformanceLogger
from core.validation import HermitianPSDValidator, SymmetricValidator
from services.additive_model import (
    AdditiveParameters,
    AdditiveStructure,
    ParameterLayout,
    RegressorBlocks,
    SubmodelParameters,
    cost,
    instrument_blocks,
    polynomial_roots,
    regressor_blocks,
    residuals,
)
from services.frf_core import FrequencyWeighting, FrfDataset
from services.linalg import (
    StreamingQR,
    hermitian_factor,
    null_space_labels,
    pivoted_lstsq,
    realify,
    relative_change,
    solve_equilibrated,
    vec,
)
from services.reduction import blocked_sum, frequency_blocks

logger = logging.getLogger(__name__)

performance_logger = PerformanceLogger("modalid.riv")


class StabilizationMode(str, Enum):
    """How unstable denominators are repaired after each update"""
    REFLECT = "reflect"
    POSITIVITY = "positivity"


class CovarianceFormula(str, Enum):
    """Parameter covariance estimators"""
    SANDWICH = "sandwich"
    DIRECT_INVERSE = "direct-inverse"


class RivOptions(BaseModel):
    """Iteration policy for the refined instrumental variable estimator"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_iterations: int = Field(default=10, ge=1)
    relative_tolerance: float = Field(default=1e-9, gt=0)
    stabilization: StabilizationMode = StabilizationMode.REFLECT
    positivity_floor: float = Field(default=1e-10, gt=0)


@dataclass(frozen=True)
class CovarianceEstimate:
    """Σ̂_β with its inverse (the Stage-2 weight) in the β layout"""
    matrix: np.ndarray
    information: np.ndarray
    parameter_labels: Tuple[str, ...]
    formula: CovarianceFormula = CovarianceFormula.SANDWICH
    relative_only: bool = False

    def __post_init__(self):
        for name in ("matrix", "information"):
            value = np.array(getattr(self, name), dtype=float)
            SymmetricValidator.validate_or_raise(value, f"covariance {name}")
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "parameter_labels", tuple(self.parameter_labels))
        if len(self.parameter_labels) != self.matrix.shape[0]:
            raise ValidationError("covariance labels do not match its dimension")
        eigenvalues = np.linalg.eigvalsh(self.matrix)
        if eigenvalues.size and eigenvalues[0] < -1e-10 * max(np.max(np.abs(eigenvalues)), np.finfo(float).tiny):
            raise ValidationError("covariance matrix is not positive semi-definite")

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def standard_deviations(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.matrix), 0.0, None))

    @classmethod
    def identity(cls, labels: Sequence[str]) -> "CovarianceEstimate":
        size = len(labels)
        return cls(np.eye(size), np.eye(size), tuple(labels), CovarianceFormula.SANDWICH, relative_only=True)


@dataclass
class RivTrace:
    """Per-iterate Stage-1 cost; entry 0 is the initial estimate"""
    costs: List[float] = field(default_factory=list)
    relative_changes: List[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.relative_changes)

    def to_records(self) -> List[dict]:
        records = [{"iter": 0, "cost": self.costs[0], "param_rel_change": float("nan")}] if self.costs else []
        for j, change in enumerate(self.relative_changes, start=1):
            records.append({"iter": j, "cost": self.costs[j], "param_rel_change": change})
        return records


def _weight_blocks(weighting: FrequencyWeighting, indices: slice):
    if weighting.diagonal:
        return weighting.diagonal_entries()[indices], True
    return weighting.block(indices), False


def _cross_products(
    left: RegressorBlocks,
    right_den: np.ndarray,
    right_num: np.ndarray,
    weight: np.ndarray,
    diagonal: bool,
    upsilon: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, ...]:
    """Compact pieces of Re Σ_k left W rightᵀ (and Re Σ_k left W Υᵀ) on one block"""
    if diagonal:
        t = left.den * weight[:, None, :]
        u = np.swapaxes(right_den, 1, 2) * weight[:, :, None]
    else:
        t = np.matmul(left.den, weight)
        u = np.matmul(weight, np.swapaxes(right_den, 1, 2))

    m_dd = np.einsum("kae,kbe->ab", t, right_den).real
    m_dn = np.einsum("kae,kb->abe", t, right_num).real
    m_nd = np.einsum("ka,keb->aeb", left.num, u).real
    if diagonal:
        m_nn = np.einsum("ka,kb,ke->abe", left.num, right_num, weight).real
    else:
        m_nn = np.einsum("ka,kb,kef->aebf", left.num, right_num, weight, optimize=True).real

    if upsilon is None:
        return m_dd, m_dn, m_nd, m_nn

    if diagonal:
        v = np.swapaxes(upsilon, 1, 2) * weight[:, :, None]
    else:
        v = np.matmul(weight, np.swapaxes(upsilon, 1, 2))
    r_d = np.einsum("kae,kce->ac", t, upsilon).real
    r_n = np.einsum("ka,kec->aec", left.num, v).real
    return m_dd, m_dn, m_nd, m_nn, r_d, r_n


def _assemble(layout: ParameterLayout, pieces: Tuple[np.ndarray, ...], diagonal: bool, n_submodels: int):
    size, d = layout.n_parameters, layout.vec_size
    den = layout.den_index
    num = layout.num_positions().ravel()
    nb = layout.n_num_blocks

    m_dd, m_dn, m_nd, m_nn = pieces[:4]
    matrix = np.zeros((size, size))
    matrix[np.ix_(den, den)] = m_dd
    matrix[np.ix_(den, num)] = m_dn.reshape(den.size, nb * d)
    matrix[np.ix_(num, den)] = m_nd.reshape(nb * d, den.size)
    if diagonal:
        full_nn = np.zeros((nb, d, nb, d))
        eye = np.arange(d)
        full_nn[:, eye, :, eye] = np.moveaxis(m_nn, 2, 0)
        m_nn = full_nn
    matrix[np.ix_(num, num)] = m_nn.reshape(nb * d, nb * d)

    if len(pieces) == 4:
        return matrix

    r_d, r_n = pieces[4:]
    rhs = np.zeros((size, n_submodels))
    rhs[den] = r_d
    rhs[num] = r_n.reshape(nb * d, n_submodels)
    return matrix, rhs


def normal_equations(
    dataset: FrfDataset,
    params: AdditiveParameters,
    weighting: FrequencyWeighting
) -> Tuple[np.ndarray, np.ndarray]:
    """M = Σ_k Re{Φ̂ W Φᵀ} and R = Σ_k Re{Φ̂ W Υᵀ} at frozen β"""
    structure = params.structure

    def block(indices: slice):
        phi = regressor_blocks(params, dataset, indices)
        phi_hat = instrument_blocks(params, dataset, indices)
        weight, diagonal = _weight_blocks(weighting, indices)
        return _cross_products(phi_hat, phi.den, phi.num, weight, diagonal, phi.upsilon)

    pieces = blocked_sum(dataset.n_points, block)
    return _assemble(structure.layout(), pieces, weighting.diagonal, structure.n_submodels)


def optimality_residual(
    dataset: FrfDataset,
    params: AdditiveParameters,
    weighting: FrequencyWeighting
) -> Tuple[np.ndarray, float]:
    """Σ_k Re{Φ̂ W vec(E)} and the largest norm among its per-frequency terms"""
    phi_hat = instrument_blocks(params, dataset).dense(params.structure.layout())
    e = vec(residuals(dataset, params))
    if weighting.diagonal:
        weighted = e * weighting.diagonal_entries()
    else:
        weighted = np.einsum("kef,kf->ke", weighting.matrices, e)
    terms = np.einsum("kpe,ke->kp", phi_hat, weighted).real
    return np.sum(terms, axis=0), float(np.max(np.linalg.norm(terms, axis=1)))


def _numerator_labels(layout: ParameterLayout) -> List[str]:
    return [f"sub{i}.B{p}" for i, p in zip(layout.num_owner, layout.num_power)]


def init_numerators(
    dataset: FrfDataset,
    structure: AdditiveStructure,
    poles: Sequence[np.ndarray],
    weighting: FrequencyWeighting
) -> AdditiveParameters:
    """Weighted linear LS for all numerators with the denominators fixed"""
    if len(poles) != structure.n_submodels:
        raise ValidationError(f"expected {structure.n_submodels} denominators, got {len(poles)}")

    layout = structure.layout()
    beta = np.zeros(structure.n_parameters)
    for i, denominator in enumerate(poles):
        denominator = np.asarray(denominator, dtype=float).reshape(-1)
        if denominator.size != structure.submodels[i].n_den:
            raise ValidationError(f"submodel {i}: expected {structure.submodels[i].n_den} denominator coefficients")
        beta[layout.offsets[i]:layout.offsets[i] + denominator.size] = denominator
    fixed = AdditiveParameters.from_vector(structure, beta)
    fixed.validate_for_estimation()

    d, nb = layout.vec_size, layout.n_num_blocks
    labels = _numerator_labels(layout)
    target = dataset.vec_frf()

    if weighting.diagonal:
        coefficients = regressor_blocks(fixed, dataset).num          # (N, nb)
        root_weights = np.sqrt(weighting.diagonal_entries())           # (N, d)
        eta = np.empty((nb, d))
        for e in range(d):
            design = realify(coefficients * root_weights[:, e:e + 1])
            rhs = realify((target[:, e] * root_weights[:, e])[:, None])
            eta[:, e] = pivoted_lstsq(design, rhs, "numerator regressor", labels)[:, 0]
    else:
        labels_full = [f"{name}[{e}]" for name in labels for e in range(d)]
        solver = StreamingQR(nb * d, 1)
        for indices in frequency_blocks(dataset.n_points):
            coefficients = regressor_blocks(fixed, dataset, indices).num
            factors = hermitian_factor(weighting.block(indices))        # L_k, Lᴴ L = W
            # design[k, e, b, f] = c_kb L_k[e, f]
            design = np.einsum("kb,kef->kebf", coefficients, factors).reshape(-1, nb * d)
            rhs = np.einsum("kef,kf->ke", factors, target[indices]).reshape(-1, 1)
            solver.add_rows(realify(design), realify(rhs))
        eta = solver.solve("numerator regressor", labels_full)[:, 0].reshape(nb, d)

    beta[layout.num_positions().ravel()] = eta.ravel()
    params = AdditiveParameters.from_vector(structure, beta)
    logger.info(f"Initialized {nb} numerator blocks, cost {cost(dataset, params, weighting):.6e}")
    return params


def stabilize(
    params: AdditiveParameters,
    mode: StabilizationMode = StabilizationMode.REFLECT,
    floor: float = 1e-10
) -> AdditiveParameters:
    """Repair unstable denominators; stable submodels are returned untouched"""
    if mode == StabilizationMode.POSITIVITY:
        if any(orders.n_den > 2 for orders in params.structure.submodels):
            raise ConfigurationError("positivity stabilization needs every denominator order ≤ 2")
        submodels = [
            sub if np.all(sub.denominator >= floor) else SubmodelParameters(np.maximum(sub.denominator, floor), sub.numerators)
            for sub in params.submodels
        ]
        return AdditiveParameters(params.structure, tuple(submodels))

    submodels = []
    for i, sub in enumerate(params.submodels):
        roots = sub.roots()
        unstable = roots.real > 0.0
        if not np.any(unstable):
            submodels.append(sub)
            continue
        reflected = np.where(unstable, -np.conj(roots), roots)
        monic = np.poly(reflected)                       # highest power first
        coefficients = np.real(monic / monic[-1])[::-1][1:]
        padded = np.zeros(sub.denominator.size)
        padded[:coefficients.size] = coefficients
        logger.debug(f"Reflected {int(np.sum(unstable))} unstable root(s) of submodel {i}")
        submodels.append(SubmodelParameters(padded, sub.numerators))
    return AdditiveParameters(params.structure, tuple(submodels))


def _extract_block_diagonal(layout: ParameterLayout, solution: np.ndarray) -> np.ndarray:
    beta = np.empty(layout.n_parameters)
    for i in range(len(layout.offsets) - 1):
        rows = slice(layout.offsets[i], layout.offsets[i + 1])
        beta[rows] = solution[rows, i]
    return beta


def riv_iterate(
    dataset: FrfDataset,
    initial: AdditiveParameters,
    weighting: FrequencyWeighting,
    opts: Optional[RivOptions] = None
) -> Tuple[AdditiveParameters, RivTrace]:
    """Refined instrumental variable iterations on the weighted criterion"""
    opts = opts or RivOptions()
    initial.validate_for_estimation()
    structure = initial.structure
    layout = structure.layout()
    labels = structure.parameter_labels()

    params = initial
    beta = params.to_vector()
    trace = RivTrace(costs=[cost(dataset, params, weighting)])
    logger.info(f"RIV start: {structure.n_submodels} submodels, dim β = {beta.size}, cost {trace.costs[0]:.6e}")

    for iteration in range(1, opts.max_iterations + 1):
        matrix, rhs = normal_equations(dataset, params, weighting)
        solution = solve_equilibrated(matrix, rhs, "RIV normal matrix", labels)
        candidate = _extract_block_diagonal(layout, solution)
        if not np.all(np.isfinite(candidate)):
            raise NumericalError("non-finite RIV update", details={"iteration": iteration})

        params = stabilize(AdditiveParameters.from_vector(structure, candidate), opts.stabilization, opts.positivity_floor)
        new_beta = params.to_vector()
        change = relative_change(new_beta, beta)
        beta = new_beta

        trace.relative_changes.append(change)
        trace.costs.append(cost(dataset, params, weighting))
        performance_logger.log_iteration("riv", iteration, trace.costs[-1], param_rel_change=change)
        logger.info(f"RIV iteration {iteration}: cost {trace.costs[-1]:.6e}, relative change {change:.3e}")

        if change < opts.relative_tolerance:
            trace.converged = True
            break

    if not trace.converged:
        logger.info(f"RIV stopped at the iteration budget ({opts.max_iterations})")
    return params, trace


def _information_pieces(dataset: FrfDataset, params: AdditiveParameters, weights: np.ndarray, diagonal: bool) -> np.ndarray:
    """Re Σ_k Φ̂ V_k Φ̂ᴴ for per-frequency Hermitian V_k (full (N,d,d) or diagonal (N,d))"""
    structure = params.structure

    def block(indices: slice):
        phi_hat = instrument_blocks(params, dataset, indices)
        return _cross_products(phi_hat, np.conj(phi_hat.den), np.conj(phi_hat.num), weights[indices], diagonal)

    pieces = blocked_sum(dataset.n_points, block)
    matrix = _assemble(structure.layout(), pieces, diagonal, structure.n_submodels)
    return 0.5 * (matrix + matrix.T)


def _invert_psd(matrix: np.ndarray, what: str, labels: Sequence[str]) -> np.ndarray:
    scale = np.sqrt(np.clip(np.diag(matrix), 0.0, None))
    if np.any(scale == 0.0):
        raise SingularSystemError(what, condition=0.0, null_space=[labels[i] for i in np.flatnonzero(scale == 0.0)][:5])
    scaled = matrix / np.outer(scale, scale)
    eigenvalues, eigenvectors = np.linalg.eigh(scaled)
    if eigenvalues[0] <= 1e-14 * eigenvalues[-1]:
        raise SingularSystemError(
            what,
            condition=float(max(eigenvalues[0], 0.0) / eigenvalues[-1]),
            null_space=null_space_labels(scaled, labels, tol=1e-14)
        )
    inverse = (eigenvectors / eigenvalues) @ eigenvectors.T
    inverse = inverse / np.outer(scale, scale)
    return 0.5 * (inverse + inverse.T)


def covariance(
    dataset: FrfDataset,
    final: AdditiveParameters,
    weighting: FrequencyWeighting,
    formula: CovarianceFormula = CovarianceFormula.SANDWICH,
    frf_covariance: Optional[np.ndarray] = None
) -> CovarianceEstimate:
    """Parameter covariance of the converged estimate.

    frf_covariance overrides the dataset's Σ_G. Without any nonzero Σ_G the
    identity is used and the estimate is flagged relative_only.
    """
    structure = final.structure
    labels = structure.parameter_labels()
    d, n_points = structure.vec_size, dataset.n_points

    sigma = frf_covariance if frf_covariance is not None else dataset.frf_covariance
    relative_only = sigma is None or not np.any(sigma != 0)
    if relative_only:
        logger.warning("No FRF covariance available; parameter covariance is relative only")
        sigma = np.broadcast_to(np.eye(d, dtype=complex), (n_points, d, d))
    else:
        HermitianPSDValidator.validate_or_raise(sigma, "FRF covariance", rtol=1e-10)

    sigma_diagonal = not np.any(sigma * (1.0 - np.eye(d)) != 0)

    if formula == CovarianceFormula.DIRECT_INVERSE:
        weights = np.real(np.diagonal(sigma, axis1=1, axis2=2)) if sigma_diagonal else np.asarray(sigma)
        information = _information_pieces(dataset, final, weights, sigma_diagonal) / n_points
        matrix = _invert_psd(information, "information matrix", labels)
        return CovarianceEstimate(matrix, information, labels, formula, relative_only)

    # Sandwich: H⁻¹ Q H⁻¹ with H = Σ Re Φ̂WΦ̂ᴴ and Q = ½ Σ Re Φ̂ W Σ_G W Φ̂ᴴ
    if weighting.diagonal:
        w = weighting.diagonal_entries()
        hessian = _information_pieces(dataset, final, w, True)
        if sigma_diagonal:
            middle, middle_diagonal = w * np.real(np.diagonal(sigma, axis1=1, axis2=2)) * w, True
        else:
            middle, middle_diagonal = w[:, :, None] * sigma * w[:, None, :], False
    else:
        w = weighting.matrices
        hessian = _information_pieces(dataset, final, w, False)
        middle, middle_diagonal = np.matmul(np.matmul(w, sigma), w), False
    score = 0.5 * _information_pieces(dataset, final, middle, middle_diagonal)

    hessian_inverse = _invert_psd(hessian, "weighted normal matrix", labels)
    matrix = hessian_inverse @ score @ hessian_inverse
    matrix = 0.5 * (matrix + matrix.T)
    information = hessian @ _invert_psd(score, "information matrix", labels) @ hessian
    information = 0.5 * (information + information.T)

    logger.info(f"Parameter covariance ({formula.value}) of dimension {matrix.shape[0]}{' (relative only)' if relative_only else ''}")
    return CovarianceEstimate(matrix, information, labels, formula, relative_only)


def initial_denominator(omega: float, zeta: float) -> np.ndarray:
    """(a_1, a_2) of 1 + a_1 s + a_2 s² for a mode with natural frequency ω and damping ζ"""
    return np.array([2.0 * zeta / omega, 1.0 / omega ** 2])


def denominator_roots(params: AdditiveParameters) -> List[np.ndarray]:
    return [polynomial_roots(sub.denominator) for sub in params.submodels]
