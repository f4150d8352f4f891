"""FRF data model, frequency weighting and CMIF order-selection tools"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np
import scipy.linalg
from scipy.signal import find_peaks
from pydantic import BaseModel, ConfigDict, Field

from core.exceptions import ConfigurationError, SingularSystemError, ValidationError
from core.validation import (
    FiniteArrayValidator,
    HermitianPSDValidator,
    StrictlyIncreasingValidator
)
from services.linalg import vec

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray, dtype=None) -> np.ndarray:
    copy = np.array(array, dtype=dtype, copy=True)
    copy.setflags(write=False)
    return copy


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing angular frequencies ω_k in rad/s."""
    omegas: np.ndarray

    def __post_init__(self):
        omegas = np.asarray(self.omegas, dtype=float).reshape(-1)
        FiniteArrayValidator.validate_or_raise(omegas, "frequency grid")
        StrictlyIncreasingValidator.validate_or_raise(omegas, "frequency grid")
        if omegas.size == 0:
            raise ValidationError("frequency grid is empty")
        if omegas[0] <= 0.0:
            raise ValidationError("frequency grid must be strictly positive")
        object.__setattr__(self, "omegas", _frozen(omegas))

    @classmethod
    def from_hz(cls, frequencies_hz) -> "FrequencyGrid":
        return cls(2.0 * np.pi * np.asarray(frequencies_hz, dtype=float))

    @property
    def n_points(self) -> int:
        return int(self.omegas.size)

    @property
    def frequencies_hz(self) -> np.ndarray:
        return self.omegas / (2.0 * np.pi)

    @property
    def s(self) -> np.ndarray:
        """Evaluation points jω_k"""
        return 1j * self.omegas


@dataclass(frozen=True)
class FrfDataset:
    """Measured FRF matrices G(ω_k), shape (N, n_y, n_u), with optional covariance.

    frf_covariance, when present, has shape (N, n_y·n_u, n_y·n_u) on the
    column-major vec ordering.
    """
    grid: FrequencyGrid
    frf: np.ndarray
    frf_covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        frf = np.asarray(self.frf, dtype=complex)
        if frf.ndim != 3 or frf.shape[0] != self.grid.n_points:
            raise ValidationError(
                f"frf must have shape (N, n_y, n_u) with N={self.grid.n_points}, got {frf.shape}"
            )
        FiniteArrayValidator.validate_or_raise(frf, "frf")
        object.__setattr__(self, "frf", _frozen(frf))

        if self.frf_covariance is not None:
            d = frf.shape[1] * frf.shape[2]
            covariance = np.asarray(self.frf_covariance, dtype=complex)
            if covariance.shape != (self.grid.n_points, d, d):
                raise ValidationError(
                    f"frf_covariance must have shape {(self.grid.n_points, d, d)}, got {covariance.shape}"
                )
            FiniteArrayValidator.validate_or_raise(covariance, "frf_covariance")
            HermitianPSDValidator.validate_or_raise(covariance, "frf_covariance", rtol=1e-10)
            object.__setattr__(self, "frf_covariance", _frozen(covariance))

    @property
    def n_outputs(self) -> int:
        return int(self.frf.shape[1])

    @property
    def n_inputs(self) -> int:
        return int(self.frf.shape[2])

    @property
    def n_points(self) -> int:
        return self.grid.n_points

    @property
    def vec_size(self) -> int:
        return self.n_outputs * self.n_inputs

    def vec_frf(self) -> np.ndarray:
        """vec(G(ω_k)) stacked as (N, n_y·n_u)"""
        return vec(self.frf)

    def has_covariance(self) -> bool:
        """True when a covariance with at least one nonzero entry is attached"""
        return self.frf_covariance is not None and bool(np.any(self.frf_covariance != 0))

    def covariance_is_diagonal(self) -> bool:
        if self.frf_covariance is None:
            return True
        off_diagonal = self.frf_covariance * (1.0 - np.eye(self.vec_size))
        return not bool(np.any(off_diagonal != 0))

    def scaled(self, factor: float) -> "FrfDataset":
        """Dataset with G scaled by factor and Σ_G by factor²"""
        covariance = None if self.frf_covariance is None else self.frf_covariance * factor ** 2
        return FrfDataset(self.grid, self.frf * factor, covariance)


class WeightingKind(str, Enum):
    """Per-frequency weighting policies"""
    IDENTITY = "identity"
    INVERSE_MAGNITUDE = "inverse-magnitude"
    INVERSE_MAGNITUDE_SQUARED = "inverse-magnitude-squared"
    INVERSE_VARIANCE = "inverse-variance"


class WeightingScheme(BaseModel):
    """Weighting policy; magnitude_floor defaults to 1e-12 × max |G| when unset"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: WeightingKind = WeightingKind.INVERSE_MAGNITUDE
    magnitude_floor: Optional[float] = Field(default=None, gt=0)


@dataclass(frozen=True)
class FrequencyWeighting:
    """Hermitian PSD weights W(ω_k), shape (N, d, d); diagonal marks a structural fast path"""
    matrices: np.ndarray
    diagonal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "matrices", _frozen(self.matrices, dtype=complex))

    @property
    def n_points(self) -> int:
        return int(self.matrices.shape[0])

    @property
    def size(self) -> int:
        return int(self.matrices.shape[1])

    def diagonal_entries(self) -> np.ndarray:
        """(N, d) real diagonal of each W(ω_k)"""
        return np.real(np.diagonal(self.matrices, axis1=1, axis2=2)).copy()

    def block(self, indices: slice) -> np.ndarray:
        return self.matrices[indices]

    @classmethod
    def identity(cls, n_points: int, size: int) -> "FrequencyWeighting":
        return cls(np.broadcast_to(np.eye(size, dtype=complex), (n_points, size, size)), diagonal=True)

    @classmethod
    def from_diagonal(cls, entries: np.ndarray) -> "FrequencyWeighting":
        entries = np.asarray(entries, dtype=float)
        n_points, size = entries.shape
        matrices = np.zeros((n_points, size, size), dtype=complex)
        index = np.arange(size)
        matrices[:, index, index] = entries
        return cls(matrices, diagonal=True)


def default_magnitude_floor(dataset: FrfDataset) -> float:
    peak = float(np.max(np.abs(dataset.frf), initial=0.0))
    return 1e-12 * peak if peak > 0.0 else 1e-12


def build_weighting(dataset: FrfDataset, scheme: WeightingScheme) -> FrequencyWeighting:
    """Construct W(ω_k) for the weighted least-squares criterion"""
    n_points, size = dataset.n_points, dataset.vec_size

    if scheme.kind == WeightingKind.IDENTITY:
        return FrequencyWeighting.identity(n_points, size)

    if scheme.kind in (WeightingKind.INVERSE_MAGNITUDE, WeightingKind.INVERSE_MAGNITUDE_SQUARED):
        floor = scheme.magnitude_floor if scheme.magnitude_floor is not None else default_magnitude_floor(dataset)
        entries = 1.0 / np.maximum(np.abs(dataset.vec_frf()), floor)
        if scheme.kind == WeightingKind.INVERSE_MAGNITUDE_SQUARED:
            entries = entries ** 2
        logger.debug(f"Magnitude weighting with floor {floor:.3e}")
        return FrequencyWeighting.from_diagonal(entries)

    # Inverse variance
    if not dataset.has_covariance():
        raise ConfigurationError(
            "inverse-variance weighting requires an FRF covariance",
            details={"weighting": scheme.kind.value}
        )
    covariance = dataset.frf_covariance
    if dataset.covariance_is_diagonal():
        variances = np.real(np.diagonal(covariance, axis1=1, axis2=2))
        scale = np.max(variances, axis=1, keepdims=True)
        singular = np.flatnonzero(np.any(variances <= 1e-15 * np.maximum(scale, np.finfo(float).tiny), axis=1))
        if singular.size:
            raise SingularSystemError(f"FRF covariance at frequency index {int(singular[0])}", condition=0.0)
        return FrequencyWeighting.from_diagonal(1.0 / variances)

    matrices = np.empty_like(covariance)
    identity = np.eye(size)
    for k in range(n_points):
        try:
            factor = scipy.linalg.cho_factor(covariance[k], lower=True)
        except np.linalg.LinAlgError:
            raise SingularSystemError(f"FRF covariance at frequency index {k}")
        inverse = scipy.linalg.cho_solve(factor, identity)
        matrices[k] = 0.5 * (inverse + np.conj(inverse.T))
    return FrequencyWeighting(matrices, diagonal=False)


@dataclass(frozen=True)
class CmifCurves:
    """Squared singular values σᵢ²(ω_k), shape (N, min(n_y, n_u)), descending per row"""
    grid: FrequencyGrid
    singular_values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "singular_values", _frozen(self.singular_values, dtype=float))

    @property
    def n_curves(self) -> int:
        return int(self.singular_values.shape[1])


@dataclass(frozen=True)
class ModePeak:
    """One CMIF peak"""
    omega: float
    multiplicity: int
    height: float
    index: int = field(default=-1)

    @property
    def frequency_hz(self) -> float:
        return self.omega / (2.0 * np.pi)


def cmif(dataset: FrfDataset) -> CmifCurves:
    """Complex mode indicator function: squared singular values of G(ω_k)"""
    singular_values = np.linalg.svd(dataset.frf, compute_uv=False)
    return CmifCurves(dataset.grid, singular_values ** 2)


def pick_modes(
    curves: CmifCurves,
    prominence_factor: float = 10.0,
    max_modes: Optional[int] = None
) -> List[ModePeak]:
    """Peak-pick the first CMIF curve.

    A peak is a local maximum exceeding prominence_factor × median of the
    first curve. Its multiplicity counts the curves with a local maximum
    within one bin of it.
    """
    if curves.grid.n_points < 3:
        raise ValidationError("pick_modes needs at least 3 grid points")
    if prominence_factor <= 1.0:
        raise ConfigurationError("prominence_factor must exceed 1")

    first = curves.singular_values[:, 0]
    threshold = prominence_factor * float(np.median(first))
    indices, _ = find_peaks(first)
    indices = [int(i) for i in indices if first[i] > threshold]

    curve_maxima = [set(find_peaks(curves.singular_values[:, i])[0].tolist()) for i in range(curves.n_curves)]

    peaks = []
    for index in indices:
        window = {index - 1, index, index + 1}
        multiplicity = sum(1 for maxima in curve_maxima if maxima & window)
        peaks.append(ModePeak(
            omega=float(curves.grid.omegas[index]),
            multiplicity=max(multiplicity, 1),
            height=float(first[index]),
            index=index
        ))

    if max_modes is not None and len(peaks) > max_modes:
        peaks = sorted(peaks, key=lambda peak: -peak.height)[:max_modes]
    peaks.sort(key=lambda peak: peak.omega)

    logger.info(f"CMIF peak picking: {len(peaks)} peaks above {threshold:.3e}")
    return peaks
