"""Additive MIMO transfer-matrix model: parameters, evaluation, residuals and regressors.

Each submodel is P_i(s) = B_i(s) / (s^ℓ_i A_i(s)) with A_i(s) = 1 + a_1 s + … + a_n s^n
and B_i(s) = B_0 + B_1 s + … + B_m s^m. The flat parameter vector β lists, per
submodel, the denominator coefficients followed by vec(B_0) … vec(B_m) with
column-major vec.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from core.exceptions import NumericalError, PoleEvaluationError, ValidationError
from core.validation import FiniteArrayValidator
from services.frf_core import FrfDataset, FrequencyWeighting
from services.linalg import unvec, vec

logger = logging.getLogger(__name__)

# Relative distance under which two denominator roots count as shared
COMMON_ROOT_TOLERANCE = 1e-8
# |s^ℓ A(s)| below this fraction of its term magnitudes is treated as a pole
POLE_TOLERANCE = 1e-14


@dataclass(frozen=True)
class SubmodelStructure:
    """Orders of one submodel: denominator n, numerator m, integrators ℓ"""
    n_den: int
    n_num: int
    n_int: int = 0

    def __post_init__(self):
        if min(self.n_den, self.n_num, self.n_int) < 0:
            raise ValidationError(f"submodel orders must be non-negative, got {self}")

    @property
    def is_biproper(self) -> bool:
        return self.n_num >= self.n_int + self.n_den

    def n_parameters(self, vec_size: int) -> int:
        return self.n_den + (self.n_num + 1) * vec_size


@dataclass(frozen=True)
class ParameterLayout:
    """Positions of denominator coefficients and numerator blocks inside β"""
    offsets: Tuple[int, ...]
    den_index: np.ndarray
    den_owner: np.ndarray
    den_power: np.ndarray
    num_index: np.ndarray
    num_owner: np.ndarray
    num_power: np.ndarray
    vec_size: int

    @property
    def n_parameters(self) -> int:
        return self.offsets[-1]

    @property
    def n_den(self) -> int:
        return int(self.den_index.size)

    @property
    def n_num_blocks(self) -> int:
        return int(self.num_index.size)

    def num_positions(self) -> np.ndarray:
        """(n_num_blocks, vec_size) β positions of every numerator entry"""
        return self.num_index[:, None] + np.arange(self.vec_size)[None, :]


@dataclass(frozen=True)
class AdditiveStructure:
    n_outputs: int
    n_inputs: int
    submodels: Tuple[SubmodelStructure, ...]

    def __post_init__(self):
        object.__setattr__(self, "submodels", tuple(self.submodels))
        if self.n_outputs < 1 or self.n_inputs < 1:
            raise ValidationError("additive structure needs at least one output and one input")
        if not self.submodels:
            raise ValidationError("additive structure needs at least one submodel")
        if sum(1 for sub in self.submodels if sub.n_int > 0) > 1:
            raise ValidationError("at most one submodel may contain integrators")
        if sum(1 for sub in self.submodels if sub.is_biproper) > 1:
            raise ValidationError("at most one submodel may be biproper")

    @property
    def vec_size(self) -> int:
        return self.n_outputs * self.n_inputs

    @property
    def n_submodels(self) -> int:
        return len(self.submodels)

    @property
    def n_parameters(self) -> int:
        return sum(sub.n_parameters(self.vec_size) for sub in self.submodels)

    def layout(self) -> ParameterLayout:
        d = self.vec_size
        offsets = [0]
        den_index, den_owner, den_power = [], [], []
        num_index, num_owner, num_power = [], [], []
        for i, sub in enumerate(self.submodels):
            start = offsets[-1]
            for p in range(1, sub.n_den + 1):
                den_index.append(start + p - 1)
                den_owner.append(i)
                den_power.append(p)
            for p in range(sub.n_num + 1):
                num_index.append(start + sub.n_den + p * d)
                num_owner.append(i)
                num_power.append(p)
            offsets.append(start + sub.n_parameters(d))
        as_int = lambda values: np.asarray(values, dtype=int)
        return ParameterLayout(
            offsets=tuple(offsets),
            den_index=as_int(den_index),
            den_owner=as_int(den_owner),
            den_power=as_int(den_power),
            num_index=as_int(num_index),
            num_owner=as_int(num_owner),
            num_power=as_int(num_power),
            vec_size=d
        )

    def parameter_labels(self) -> List[str]:
        """Human-readable name of every β entry (1-based matrix indices)"""
        labels = []
        for i, sub in enumerate(self.submodels):
            labels.extend(f"sub{i}.a{p}" for p in range(1, sub.n_den + 1))
            for p in range(sub.n_num + 1):
                for col in range(self.n_inputs):
                    for row in range(self.n_outputs):
                        labels.append(f"sub{i}.B{p}[{row + 1},{col + 1}]")
        return labels


@dataclass(frozen=True)
class SubmodelParameters:
    """Denominator coefficients a_1…a_n and numerator matrices B_0…B_m, shape (m+1, n_y, n_u)"""
    denominator: np.ndarray
    numerators: np.ndarray

    def __post_init__(self):
        denominator = np.array(self.denominator, dtype=float).reshape(-1)
        numerators = np.array(self.numerators, dtype=float)
        if numerators.ndim != 3:
            raise ValidationError("numerators must have shape (m+1, n_y, n_u)")
        FiniteArrayValidator.validate_or_raise(denominator, "denominator")
        FiniteArrayValidator.validate_or_raise(numerators, "numerators")
        denominator.setflags(write=False)
        numerators.setflags(write=False)
        object.__setattr__(self, "denominator", denominator)
        object.__setattr__(self, "numerators", numerators)

    def denominator_polynomial(self) -> np.ndarray:
        """Coefficients of A(s) in increasing powers, constant term 1"""
        return np.concatenate([[1.0], self.denominator])

    def roots(self) -> np.ndarray:
        return polynomial_roots(self.denominator)

    def is_stable(self) -> bool:
        return bool(np.all(self.roots().real < 0.0))


def polynomial_roots(coefficients: np.ndarray) -> np.ndarray:
    """Roots of 1 + a_1 s + … + a_n s^n"""
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.size == 0:
        return np.zeros(0, dtype=complex)
    return np.roots(np.concatenate([coefficients[::-1], [1.0]])).astype(complex)


@dataclass(frozen=True)
class AdditiveParameters:
    structure: AdditiveStructure
    submodels: Tuple[SubmodelParameters, ...]

    def __post_init__(self):
        object.__setattr__(self, "submodels", tuple(self.submodels))
        if len(self.submodels) != self.structure.n_submodels:
            raise ValidationError("number of submodel parameter sets does not match the structure")
        shape = (self.structure.n_outputs, self.structure.n_inputs)
        for i, (sub, orders) in enumerate(zip(self.submodels, self.structure.submodels)):
            if sub.denominator.size != orders.n_den:
                raise ValidationError(f"submodel {i}: expected {orders.n_den} denominator coefficients")
            if sub.numerators.shape != (orders.n_num + 1,) + shape:
                raise ValidationError(f"submodel {i}: expected numerators of shape {(orders.n_num + 1,) + shape}")

    def to_vector(self) -> np.ndarray:
        """Flat β in the fixed layout"""
        parts = []
        for sub in self.submodels:
            parts.append(sub.denominator)
            parts.append(vec(sub.numerators).reshape(-1))
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, structure: AdditiveStructure, beta: np.ndarray) -> "AdditiveParameters":
        beta = np.asarray(beta, dtype=float).reshape(-1)
        if beta.size != structure.n_parameters:
            raise ValidationError(f"β has {beta.size} entries, structure needs {structure.n_parameters}")
        d = structure.vec_size
        submodels, cursor = [], 0
        for orders in structure.submodels:
            denominator = beta[cursor:cursor + orders.n_den]
            cursor += orders.n_den
            block = beta[cursor:cursor + (orders.n_num + 1) * d].reshape(orders.n_num + 1, d)
            cursor += (orders.n_num + 1) * d
            submodels.append(SubmodelParameters(denominator, unvec(block, structure.n_outputs, structure.n_inputs)))
        return cls(structure, tuple(submodels))

    @classmethod
    def zeros(cls, structure: AdditiveStructure) -> "AdditiveParameters":
        return cls.from_vector(structure, np.zeros(structure.n_parameters))

    def with_submodel(self, index: int, submodel: SubmodelParameters) -> "AdditiveParameters":
        submodels = list(self.submodels)
        submodels[index] = submodel
        return AdditiveParameters(self.structure, tuple(submodels))

    def is_stable(self) -> bool:
        return all(sub.is_stable() for sub in self.submodels)

    def common_root_conflicts(self, tolerance: float = COMMON_ROOT_TOLERANCE) -> List[Tuple[int, int, complex]]:
        """Pairs of submodels sharing a denominator root within relative tolerance"""
        roots = [sub.roots() for sub in self.submodels]
        conflicts = []
        for i in range(len(roots)):
            for j in range(i + 1, len(roots)):
                for root_i in roots[i]:
                    distance = np.abs(roots[j] - root_i)
                    scale = np.maximum(np.maximum(np.abs(roots[j]), abs(root_i)), np.finfo(float).tiny)
                    if np.any(distance <= tolerance * scale):
                        conflicts.append((i, j, complex(root_i)))
        return conflicts

    def validate_for_estimation(self) -> None:
        """Stability and root-disjointness required before iterating"""
        for i, sub in enumerate(self.submodels):
            if not sub.is_stable():
                raise ValidationError(f"submodel {i} has a denominator root outside the open left half-plane")
        conflicts = self.common_root_conflicts()
        if conflicts:
            i, j, root = conflicts[0]
            raise ValidationError(
                f"submodels {i} and {j} share the denominator root {root}",
                details={"conflicts": [(a, b, str(r)) for a, b, r in conflicts]}
            )


def _powers(s: np.ndarray, order: int) -> np.ndarray:
    """(N, order+1) matrix of s^0 … s^order"""
    return s[:, None] ** np.arange(order + 1)[None, :]


@dataclass
class SubmodelResponse:
    """Per-frequency pieces of every submodel on a set of points s, shape-prefixed by N"""
    s: np.ndarray
    denominators: np.ndarray   # (N, K) A_i(s)
    integrators: np.ndarray    # (N, K) s^ℓ_i
    outputs: np.ndarray        # (N, K, n_y, n_u) P_i(s)

    @property
    def total(self) -> np.ndarray:
        return np.sum(self.outputs, axis=1)


def submodel_response(params: AdditiveParameters, s: np.ndarray) -> SubmodelResponse:
    """Evaluate every submodel at the points s; raises PoleEvaluationError at a pole"""
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    structure = params.structure
    n_points, n_sub = s.size, structure.n_submodels
    denominators = np.empty((n_points, n_sub), dtype=complex)
    integrators = np.empty((n_points, n_sub), dtype=complex)
    outputs = np.empty((n_points, n_sub, structure.n_outputs, structure.n_inputs), dtype=complex)

    for i, (sub, orders) in enumerate(zip(params.submodels, structure.submodels)):
        den_powers = _powers(s, orders.n_den)
        poly = sub.denominator_polynomial()
        a_values = den_powers @ poly
        s_int = s ** orders.n_int
        full = s_int * a_values
        scale = np.abs(s_int) * (np.abs(den_powers) @ np.abs(poly))
        at_pole = np.abs(full) <= POLE_TOLERANCE * scale
        if np.any(at_pole):
            raise PoleEvaluationError("submodel", i, complex(s[np.argmax(at_pole)]))
        numerator = np.tensordot(_powers(s, orders.n_num), sub.numerators, axes=(1, 0))
        denominators[:, i] = a_values
        integrators[:, i] = s_int
        outputs[:, i] = numerator / full[:, None, None]

    return SubmodelResponse(s, denominators, integrators, outputs)


def eval_additive(params: AdditiveParameters, s: Union[complex, np.ndarray]) -> np.ndarray:
    """P(s) = Σ_i B_i(s)/(s^ℓ_i A_i(s)); scalar s gives (n_y, n_u), an array gives (N, n_y, n_u)"""
    scalar = np.ndim(s) == 0
    total = submodel_response(params, s).total
    return total[0] if scalar else total


def residuals(dataset: FrfDataset, params: AdditiveParameters, indices: slice = slice(None)) -> np.ndarray:
    """E(ω_k) = G(ω_k) − P(jω_k) on the selected frequencies, shape (n, n_y, n_u)"""
    return dataset.frf[indices] - eval_additive(params, dataset.grid.s[indices])


def residual_matrix(dataset: FrfDataset, params: AdditiveParameters, k: int) -> np.ndarray:
    """E(ω_k, β) at one frequency index"""
    if not 0 <= k < dataset.n_points:
        raise ValidationError(f"frequency index {k} out of range [0, {dataset.n_points})")
    return residuals(dataset, params, slice(k, k + 1))[0]


def weighted_quadratic_forms(errors: np.ndarray, weighting: FrequencyWeighting, indices: slice = slice(None)) -> np.ndarray:
    """vec(E_k)ᴴ W_k vec(E_k) per frequency, real part after an imaginary-residue check"""
    e = vec(errors)
    if weighting.diagonal:
        forms = np.einsum("ke,ke->k", np.abs(e) ** 2, weighting.diagonal_entries()[indices]).astype(complex)
    else:
        forms = np.einsum("ke,kef,kf->k", np.conj(e), weighting.block(indices), e)
    if not np.all(np.isfinite(forms)):
        raise NumericalError("non-finite weighted residual")
    imaginary = np.abs(forms.imag)
    if np.any(imaginary > 1e-10 * np.maximum(np.abs(forms), np.finfo(float).tiny)):
        raise NumericalError("weighted residual has a significant imaginary part; weights are not Hermitian")
    return forms.real


def cost(dataset: FrfDataset, params: AdditiveParameters, weighting: FrequencyWeighting) -> float:
    """(1/2N) Σ_k vec(E_k)ᴴ W_k vec(E_k)"""
    errors = residuals(dataset, params)
    if not np.all(np.isfinite(errors)):
        raise NumericalError("non-finite residual")
    return float(np.sum(weighted_quadratic_forms(errors, weighting)) / (2.0 * dataset.n_points))


def weighted_residual_norms(dataset: FrfDataset, params: AdditiveParameters, weighting: FrequencyWeighting) -> np.ndarray:
    """sqrt(vec(E_k)ᴴ W_k vec(E_k)) per frequency"""
    return np.sqrt(np.maximum(weighted_quadratic_forms(residuals(dataset, params), weighting), 0.0))


@dataclass
class RegressorBlocks:
    """Sparse form of Φ (or Φ̂) on a frequency block.

    den holds the dense denominator rows, num the scalar that multiplies the
    identity in each numerator block, upsilon the filtered outputs Υ_i.
    """
    den: np.ndarray       # (n, n_den, d)
    num: np.ndarray       # (n, n_num_blocks)
    upsilon: Optional[np.ndarray] = None  # (n, K, d)

    def dense(self, layout: ParameterLayout) -> np.ndarray:
        """Assemble the full (n, dim β, d) matrices"""
        n_points = self.den.shape[0]
        d = layout.vec_size
        full = np.zeros((n_points, layout.n_parameters, d), dtype=complex)
        full[:, layout.den_index, :] = self.den
        eye = np.arange(d)
        for b, start in enumerate(layout.num_index):
            full[:, start + eye, eye] = self.num[:, b][:, None]
        return full


def _blocks(params: AdditiveParameters, dataset: FrfDataset, indices: slice, instrument: bool) -> RegressorBlocks:
    structure = params.structure
    layout = structure.layout()
    s = dataset.grid.s[indices]
    response = submodel_response(params, s)
    vec_outputs = vec(response.outputs)                        # (n, K, d)
    if instrument:
        filtered = vec_outputs
    else:
        vec_total = np.sum(vec_outputs, axis=1, keepdims=True)
        filtered = vec(dataset.frf[indices])[:, None, :] - vec_total + vec_outputs   # residual plants G̃_i
    scaled = filtered / response.denominators[:, :, None]       # vec(·)/A_i

    den = -(s[:, None] ** layout.den_power[None, :])[:, :, None] * scaled[:, layout.den_owner, :]
    full_den = response.integrators * response.denominators     # s^ℓ A
    num = s[:, None] ** layout.num_power[None, :] / full_den[:, layout.num_owner]

    if instrument:
        return RegressorBlocks(np.conj(den), np.conj(num))
    return RegressorBlocks(den, num, scaled)


def regressor_blocks(params: AdditiveParameters, dataset: FrfDataset, indices: slice = slice(None)) -> RegressorBlocks:
    """Pseudolinear regressor Φ and filtered outputs Υ on a frequency block"""
    return _blocks(params, dataset, indices, instrument=False)


def instrument_blocks(params: AdditiveParameters, dataset: FrfDataset, indices: slice = slice(None)) -> RegressorBlocks:
    """Instrument Φ̂ = (∂vec(P)/∂βᵀ)ᴴ on a frequency block"""
    return _blocks(params, dataset, indices, instrument=True)


def regressor_phi(params: AdditiveParameters, dataset: FrfDataset, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Φ(ω_k, β) of shape (dim β, n_y·n_u) and Υ(ω_k, β) of shape (K, n_y·n_u)"""
    blocks = regressor_blocks(params, dataset, slice(k, k + 1))
    return blocks.dense(params.structure.layout())[0], blocks.upsilon[0]


def instrument_phi_hat(params: AdditiveParameters, dataset: FrfDataset, k: int) -> np.ndarray:
    """Φ̂(ω_k, β) of shape (dim β, n_y·n_u)"""
    return instrument_blocks(params, dataset, slice(k, k + 1)).dense(params.structure.layout())[0]


def pseudolinear_residual(params: AdditiveParameters, dataset: FrfDataset, k: int, submodel: int) -> np.ndarray:
    """Υ_i − Φ_iᵀ θ_i at frequency k; equals vec(E(ω_k))"""
    phi, upsilon = regressor_phi(params, dataset, k)
    offsets = params.structure.layout().offsets
    rows = slice(offsets[submodel], offsets[submodel + 1])
    theta = params.to_vector()[rows]
    return upsilon[submodel] - phi[rows].T @ theta


def structure_from_orders(n_outputs: int, n_inputs: int, orders: Sequence[Tuple[int, int, int]]) -> AdditiveStructure:
    """Build a structure from (n, m, ℓ) triples"""
    return AdditiveStructure(n_outputs, n_inputs, tuple(SubmodelStructure(n, m, l) for n, m, l in orders))
