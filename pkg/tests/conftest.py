"""Shared modal systems, grids and datasets"""
import numpy as np
import pytest

from services.frf_core import FrequencyGrid, WeightingKind, WeightingScheme, build_weighting
from services.modal_model import ModalParameters, eigenvalue_from, normalize_gauge
from services.synth import simulate_frf

TWO_PI = 2.0 * np.pi


@pytest.fixture
def grid():
    """Log grid around two resonances at 1 Hz and 3 Hz"""
    return FrequencyGrid.from_hz(np.geomspace(0.2, 10.0, 300))


@pytest.fixture
def general_rho():
    """2×2, two general-damping modes with complex shapes"""
    rho = ModalParameters.general(
        [eigenvalue_from(TWO_PI * 1.0, 0.02), eigenvalue_from(TWO_PI * 3.0, 0.03)],
        [[1.0, 0.5j], [0.3, 1.0 - 0.2j]],
        [[0.8, -0.4 + 0.1j], [0.2j, 1.0]],
    )
    return normalize_gauge(rho)


@pytest.fixture
def proportional_rho():
    """2×1, one rigid-body mode and two proportional modes"""
    rho = ModalParameters.proportional(
        [TWO_PI * 1.0, TWO_PI * 3.0], [0.02, 0.03],
        [[1.0, 0.4], [-0.5, 1.0]], [[2.0], [1.5]],
        rigid_left=[[0.6, 0.8]], rigid_right=[[0.5]],
    )
    return normalize_gauge(rho)


@pytest.fixture
def general_dataset(general_rho, grid):
    return simulate_frf(general_rho, grid)


@pytest.fixture
def proportional_dataset(proportional_rho, grid):
    return simulate_frf(proportional_rho, grid)


@pytest.fixture
def magnitude_weighting():
    def build(dataset):
        return build_weighting(dataset, WeightingScheme(kind=WeightingKind.INVERSE_MAGNITUDE))
    return build


@pytest.fixture(scope="session")
def wafer_rho():
    """4×13 with 3 rigid-body and 17 lightly damped general modes between 40 Hz and 1.6 kHz.

    Residues are scaled so each mode peaks near 1/(2ζ) with a quasi-static
    level near 1, and the rigid-body term is near 1 at 20 Hz.
    """
    rng = np.random.default_rng(11)
    hz = np.geomspace(40.0, 1600.0, 17) * rng.uniform(0.97, 1.03, size=17)
    omegas = TWO_PI * hz
    zetas = rng.uniform(0.005, 0.01, size=17)
    left = rng.standard_normal((17, 4)) + 1j * rng.standard_normal((17, 4))
    right = rng.standard_normal((17, 13)) + 1j * rng.standard_normal((17, 13))
    left /= np.linalg.norm(left, axis=1, keepdims=True)
    right /= np.linalg.norm(right, axis=1, keepdims=True)
    left *= np.sqrt(omegas / 2.0)[:, None]
    right *= np.sqrt(omegas / 2.0)[:, None]

    rigid_scale = TWO_PI * 20.0
    rigid_left = rng.standard_normal((3, 4))
    rigid_right = rng.standard_normal((3, 13))
    rigid_left *= rigid_scale / np.linalg.norm(rigid_left, axis=1, keepdims=True)
    rigid_right *= rigid_scale / np.linalg.norm(rigid_right, axis=1, keepdims=True)

    eigenvalues = [eigenvalue_from(w, z) for w, z in zip(omegas, zetas)]
    return normalize_gauge(ModalParameters.general(eigenvalues, left, right, rigid_left, rigid_right))


@pytest.fixture(scope="session")
def wafer_grid():
    return FrequencyGrid.from_hz(np.geomspace(20.0, 2000.0, 2000))
