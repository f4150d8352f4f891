"""
Tests for the FRF data model, frequency weighting and CMIF tools.

Covers:
- grid and dataset invariants
- the four weighting policies, magnitude floor included
- CMIF singular values and peak picking
"""
import numpy as np
import pytest

from core.exceptions import ConfigurationError, ValidationError
from services.frf_core import (
    CmifCurves,
    FrequencyGrid,
    FrfDataset,
    WeightingKind,
    WeightingScheme,
    build_weighting,
    cmif,
    pick_modes,
)
from services.synth import simulate_frf


def single_point(frf, covariance=None):
    return FrfDataset(FrequencyGrid([1.0]), np.asarray(frf, dtype=complex)[None], covariance)


class TestFrequencyGrid:
    """Grid construction and validation"""

    def test_from_hz(self):
        """Hz grid converts to rad/s"""
        grid = FrequencyGrid.from_hz([1.0, 2.0])
        np.testing.assert_allclose(grid.omegas, [2 * np.pi, 4 * np.pi])
        np.testing.assert_allclose(grid.frequencies_hz, [1.0, 2.0])
        np.testing.assert_allclose(grid.s, [2j * np.pi, 4j * np.pi])

    def test_rejects_unsorted(self):
        with pytest.raises(ValidationError):
            FrequencyGrid([2.0, 1.0])

    def test_rejects_non_positive(self):
        with pytest.raises(ValidationError):
            FrequencyGrid([0.0, 1.0])

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            FrequencyGrid([])

    def test_immutable(self):
        grid = FrequencyGrid([1.0, 2.0])
        with pytest.raises(ValueError):
            grid.omegas[0] = 5.0


class TestFrfDataset:
    """Shape and covariance checks"""

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            FrfDataset(FrequencyGrid([1.0, 2.0]), np.ones((3, 1, 1)))

    def test_non_finite(self):
        with pytest.raises(ValidationError):
            single_point([[np.nan]])

    def test_covariance_must_be_psd(self):
        covariance = np.array([[[1.0, 0.0], [0.0, -1.0]]])
        with pytest.raises(ValidationError):
            single_point([[1.0], [2.0]], covariance)

    def test_vec_is_column_major(self):
        dataset = single_point([[1, 2], [3, 4]])
        np.testing.assert_array_equal(dataset.vec_frf()[0], [1, 3, 2, 4])

    def test_zero_covariance_counts_as_absent(self):
        dataset = single_point([[1.0]], np.zeros((1, 1, 1)))
        assert not dataset.has_covariance()


class TestWeighting:
    """Per-frequency weighting matrices"""

    def test_identity(self):
        weighting = build_weighting(single_point([[3.0, 1.0]]), WeightingScheme(kind=WeightingKind.IDENTITY))
        np.testing.assert_array_equal(weighting.matrices[0], np.eye(2))
        assert weighting.diagonal

    def test_inverse_magnitude_scalar(self):
        """|G| = 4 gives W = 0.25"""
        weighting = build_weighting(single_point([[4.0]]), WeightingScheme())
        np.testing.assert_allclose(weighting.matrices[0], [[0.25]])

    def test_inverse_magnitude_is_element_wise(self):
        """G = [3j, −4] gives diag(1/3, 1/4)"""
        weighting = build_weighting(single_point([[3j], [-4.0]]), WeightingScheme())
        np.testing.assert_allclose(weighting.matrices[0], np.diag([1 / 3, 1 / 4]))

    def test_magnitude_floor(self):
        scheme = WeightingScheme(magnitude_floor=1e-8)
        weighting = build_weighting(single_point([[0.0]]), scheme)
        np.testing.assert_allclose(weighting.matrices[0], [[1e8]])

    def test_inverse_magnitude_squared(self):
        scheme = WeightingScheme(kind=WeightingKind.INVERSE_MAGNITUDE_SQUARED)
        weighting = build_weighting(single_point([[4.0]]), scheme)
        np.testing.assert_allclose(weighting.matrices[0], [[1 / 16]])

    def test_inverse_variance_needs_covariance(self):
        scheme = WeightingScheme(kind=WeightingKind.INVERSE_VARIANCE)
        with pytest.raises(ConfigurationError):
            build_weighting(single_point([[1.0]]), scheme)

    def test_inverse_variance_diagonal(self):
        covariance = np.diag([0.5, 0.25]).astype(complex)[None]
        dataset = single_point([[1.0], [1.0]], covariance)
        weighting = build_weighting(dataset, WeightingScheme(kind=WeightingKind.INVERSE_VARIANCE))
        np.testing.assert_allclose(weighting.matrices[0], np.diag([2.0, 4.0]))
        assert weighting.diagonal

    def test_inverse_variance_full(self):
        """A full Σ_G is inverted; the result is Hermitian"""
        covariance = np.array([[2.0, 0.5j], [-0.5j, 1.0]])
        dataset = single_point([[1.0], [1.0]], covariance[None])
        weighting = build_weighting(dataset, WeightingScheme(kind=WeightingKind.INVERSE_VARIANCE))
        np.testing.assert_allclose(weighting.matrices[0] @ covariance, np.eye(2), atol=1e-12)
        assert not weighting.diagonal

    def test_scheme_rejects_unknown_field(self):
        with pytest.raises(Exception):
            WeightingScheme(kind="identity", exponent=2)


class TestCmif:
    """Squared singular values per frequency"""

    def test_diagonal(self):
        curves = cmif(single_point([[3.0, 0.0], [0.0, 0.0]]))
        np.testing.assert_allclose(curves.singular_values[0], [9.0, 0.0])

    def test_all_ones(self):
        curves = cmif(single_point([[1.0, 1.0], [1.0, 1.0]]))
        np.testing.assert_allclose(curves.singular_values[0], [4.0, 0.0], atol=1e-12)

    def test_sum_equals_frobenius_norm(self, general_dataset):
        curves = cmif(general_dataset)
        frobenius = np.sum(np.abs(general_dataset.frf) ** 2, axis=(1, 2))
        np.testing.assert_allclose(np.sum(curves.singular_values, axis=1), frobenius, rtol=1e-10)

    def test_descending(self, general_dataset):
        curves = cmif(general_dataset)
        assert np.all(np.diff(curves.singular_values, axis=1) <= 0)


class TestPickModes:
    """Peak picking on the first CMIF curve"""

    @staticmethod
    def curves(first, second=None):
        values = np.asarray(first, dtype=float)[:, None]
        if second is not None:
            values = np.column_stack([first, second])
        return CmifCurves(FrequencyGrid(np.arange(1.0, values.shape[0] + 1.0)), values)

    def test_flat_curve(self):
        assert pick_modes(self.curves(np.ones(20))) == []

    def test_two_peaks(self):
        first = np.ones(50)
        first[20], first[35] = 100.0, 50.0
        peaks = pick_modes(self.curves(first))
        assert [peak.index for peak in peaks] == [20, 35]
        assert peaks[0].omega == pytest.approx(21.0)
        assert all(peak.multiplicity == 1 for peak in peaks)

    def test_max_modes_keeps_highest(self):
        first = np.ones(50)
        first[20], first[35] = 50.0, 100.0
        peaks = pick_modes(self.curves(first), max_modes=1)
        assert [peak.index for peak in peaks] == [35]

    def test_multiplicity(self):
        """A second curve peaking one bin away marks a repeated mode"""
        first, second = np.ones(50), 0.5 * np.ones(50)
        first[20], second[21] = 100.0, 40.0
        peaks = pick_modes(self.curves(first, second))
        assert len(peaks) == 1
        assert peaks[0].multiplicity == 2

    def test_below_prominence(self):
        first = np.ones(50)
        first[20] = 5.0
        assert pick_modes(self.curves(first), prominence_factor=10.0) == []

    def test_needs_three_points(self):
        with pytest.raises(ValidationError):
            pick_modes(self.curves([1.0, 2.0]))

    def test_prominence_factor_above_one(self):
        with pytest.raises(ConfigurationError):
            pick_modes(self.curves(np.ones(10)), prominence_factor=1.0)

    def test_resonances_of_simulated_system(self, general_dataset):
        """Well-separated resonances at 1 Hz and 3 Hz are found"""
        peaks = pick_modes(cmif(general_dataset))
        hz = [peak.frequency_hz for peak in peaks]
        assert len(hz) == 2
        assert hz[0] == pytest.approx(1.0, rel=0.02)
        assert hz[1] == pytest.approx(3.0, rel=0.02)

    @pytest.mark.parametrize("factor", [2.0 ** -20, 7.5, 1e3])
    def test_invariant_to_frf_scale(self, general_dataset, factor):
        reference = pick_modes(cmif(general_dataset))
        scaled = pick_modes(cmif(FrfDataset(general_dataset.grid, factor * general_dataset.frf)))
        assert [peak.index for peak in scaled] == [peak.index for peak in reference]
        assert [peak.multiplicity for peak in scaled] == [peak.multiplicity for peak in reference]

    @pytest.mark.slow
    def test_seventeen_resonances_of_wafer_stage(self, wafer_rho, wafer_grid):
        """Every flexible mode of the 4×13 system is found within 1% at the default prominence"""
        peaks = pick_modes(cmif(simulate_frf(wafer_rho, wafer_grid)))
        assert len(peaks) == 17
        np.testing.assert_allclose([peak.frequency_hz for peak in peaks], wafer_rho.natural_frequencies_hz(), rtol=0.01)
