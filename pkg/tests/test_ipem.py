"""
Tests for the Stage-2 projection onto the modal model set.

Covers:
- rank-one approximation and residue profiles
- SVD initialization from an additive estimate
- the weighted Gauss–Newton refinement
"""
import numpy as np
import pytest
from scipy.optimize import minimize

from core.exceptions import ConfigurationError, NumericalError, ValidationError
from services.additive_model import AdditiveParameters, SubmodelParameters, structure_from_orders
from services.ipem import (
    GaussNewtonStatus,
    IpemOptions,
    gauss_newton,
    rank_one_approx,
    residue_profiles,
    svd_init,
)
from services.modal_model import DampingModel, ModalParameters, from_vector, map_f, to_vector
from services.riv import CovarianceEstimate


def single_flexible(denominator, numerators):
    structure = structure_from_orders(*np.shape(numerators)[1:], [(2, 1, 0)])
    return AdditiveParameters(structure, (SubmodelParameters(denominator, numerators),))


def perturbed(rho, scale, seed):
    rng = np.random.default_rng(seed)
    vector = to_vector(rho)
    return from_vector(rho, vector * (1.0 + scale * rng.standard_normal(vector.size)))


class TestRankOneApprox:
    """Dominant singular pair"""

    def test_diagonal(self):
        u, v = rank_one_approx(np.diag([2.0, 1.0]))
        np.testing.assert_allclose(np.outer(u, v), [[2.0, 0.0], [0.0, 0.0]], atol=1e-15)

    def test_rank_one_reproduced(self):
        matrix = np.outer([1.0, -2.0, 0.5], [3.0, 1j])
        u, v = rank_one_approx(matrix)
        np.testing.assert_allclose(np.outer(u, v), matrix, atol=1e-14)

    def test_frobenius_optimal(self):
        rng = np.random.default_rng(0)
        matrix = rng.standard_normal((4, 3))
        u, v = rank_one_approx(matrix)
        singular_values = np.linalg.svd(matrix, compute_uv=False)
        error = np.linalg.norm(matrix - np.outer(u, v))
        assert error == pytest.approx(np.sqrt(np.sum(singular_values[1:] ** 2)))

    @pytest.mark.parametrize("shape", [(2, 2), (3, 2), (4, 13)])
    def test_no_random_rank_one_does_better(self, shape):
        """For unit x, y the best multiple of x yᵀ leaves ‖A‖² − |xᴴ A ȳ|²"""
        rng = np.random.default_rng(sum(shape))
        m, n = shape
        for _ in range(100):
            matrix = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            u, v = rank_one_approx(matrix)
            error = np.linalg.norm(matrix - np.outer(u, v)) ** 2

            x = rng.standard_normal((1000, m)) + 1j * rng.standard_normal((1000, m))
            y = rng.standard_normal((1000, n)) + 1j * rng.standard_normal((1000, n))
            x /= np.linalg.norm(x, axis=1, keepdims=True)
            y /= np.linalg.norm(y, axis=1, keepdims=True)
            captured = np.abs(np.einsum("cm,mn,cn->c", np.conj(x), matrix, np.conj(y))) ** 2
            candidates = np.linalg.norm(matrix) ** 2 - captured
            assert error <= np.min(candidates) + 1e-12 * np.linalg.norm(matrix) ** 2

    def test_zero_matrix(self):
        with pytest.raises(ValidationError):
            rank_one_approx(np.zeros((2, 2)))


class TestResidueProfiles:
    """Singular value diagnostics"""

    def test_rank_one_residues(self, general_rho):
        profiles = residue_profiles(map_f(general_rho), DampingModel.GENERAL)
        assert [p.kind for p in profiles] == ["flexible", "flexible"]
        for profile in profiles:
            assert profile.singular_values[0] == pytest.approx(1.0)
            assert profile.singular_values[1] < 1e-10
            assert profile.discarded_mass < 1e-6

    def test_rank_two_residue(self):
        beta = single_flexible([0.25, 0.25], [0.25 * np.eye(2), np.zeros((2, 2))])
        (profile,) = residue_profiles(beta, DampingModel.PROPORTIONAL)
        np.testing.assert_allclose(profile.singular_values, [1.0, 1.0])
        assert profile.discarded_mass == pytest.approx(np.sqrt(0.5))

    def test_rigid_and_flexible(self, proportional_rho):
        profiles = residue_profiles(map_f(proportional_rho), DampingModel.PROPORTIONAL)
        assert [p.kind for p in profiles] == ["rigid", "flexible", "flexible"]


class TestSvdInit:
    """Initial modal parameters from β̂"""

    def test_general_recovery(self, general_rho):
        rho = svd_init(map_f(general_rho), DampingModel.GENERAL, 0)
        np.testing.assert_allclose(rho.eigenvalues, general_rho.eigenvalues, rtol=1e-10)
        np.testing.assert_allclose(rho.residues(), general_rho.residues(), rtol=1e-8, atol=1e-10)

    def test_proportional_recovery(self, proportional_rho):
        rho = svd_init(map_f(proportional_rho), DampingModel.PROPORTIONAL, 1)
        assert rho.damping_model == DampingModel.PROPORTIONAL
        np.testing.assert_allclose(rho.omegas, proportional_rho.omegas, rtol=1e-10)
        np.testing.assert_allclose(rho.zetas, proportional_rho.zetas, rtol=1e-8)
        np.testing.assert_allclose(rho.residues(), proportional_rho.residues(), rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(rho.rigid_residue(), proportional_rho.rigid_residue(), rtol=1e-10)

    def test_result_is_gauge_normalized(self, general_rho):
        rho = svd_init(map_f(general_rho), DampingModel.GENERAL, 0)
        np.testing.assert_allclose(np.linalg.norm(rho.left, axis=1), 1.0)

    def test_missing_rigid_submodel(self, general_rho):
        with pytest.raises(ConfigurationError):
            svd_init(map_f(general_rho), DampingModel.GENERAL, 1)

    def test_unexpected_rigid_submodel(self, proportional_rho):
        with pytest.raises(ConfigurationError):
            svd_init(map_f(proportional_rho), DampingModel.PROPORTIONAL, 0)

    def test_overdamped_denominator(self):
        beta = single_flexible([3.0, 1.0], [[[1.0]], [[0.0]]])
        with pytest.raises(NumericalError):
            svd_init(beta, DampingModel.GENERAL, 0)

    def test_unsupported_structure(self):
        structure = structure_from_orders(1, 1, [(2, 0, 0)])
        beta = AdditiveParameters(structure, (SubmodelParameters([0.1, 0.25], [[[1.0]]]),))
        with pytest.raises(ConfigurationError):
            svd_init(beta)


class TestGaussNewton:
    """Weighted projection β̂ → ρ"""

    def test_fixed_point(self, general_rho):
        beta_hat = map_f(general_rho).to_vector()
        rho, trace = gauss_newton(beta_hat, None, general_rho)
        assert trace.final_objective < 1e-20
        assert trace.identity_weighting
        np.testing.assert_allclose(rho.eigenvalues, general_rho.eigenvalues, rtol=1e-10)

    def test_rounding_level_start_is_converged(self, general_rho):
        """A start that reproduces β̂ up to rounding needs no iterations"""
        exact = map_f(general_rho).to_vector()
        beta_hat = exact * (1.0 + 4.0 * np.finfo(float).eps * np.sign(np.sin(np.arange(exact.size) + 1.0)))
        rho, trace = gauss_newton(beta_hat, None, general_rho)
        assert trace.objectives[0] > 0.0
        assert trace.status == GaussNewtonStatus.CONVERGED
        assert trace.iterations == 0

    def test_recovers_from_perturbed_start(self, proportional_rho):
        beta_hat = map_f(proportional_rho).to_vector()
        start = perturbed(proportional_rho, 0.02, seed=1)
        rho, trace = gauss_newton(beta_hat, None, start, IpemOptions(max_iterations=50))
        assert all(b <= a for a, b in zip(trace.objectives, trace.objectives[1:]))
        assert trace.final_objective < 1e-16
        np.testing.assert_allclose(rho.omegas, proportional_rho.omegas, rtol=1e-6)
        np.testing.assert_allclose(rho.residues(), proportional_rho.residues(), rtol=1e-6, atol=1e-8)

    def test_general_recovery(self, general_rho):
        beta_hat = map_f(general_rho).to_vector()
        start = perturbed(general_rho, 0.01, seed=2)
        rho, trace = gauss_newton(beta_hat, None, start, IpemOptions(max_iterations=50))
        assert trace.final_objective < trace.objectives[0]
        np.testing.assert_allclose(rho.eigenvalues, general_rho.eigenvalues, rtol=1e-6)

    def test_matches_derivative_free_minimum(self):
        """A non-representable β̂ is projected to the same minimum Nelder–Mead finds"""
        truth = ModalParameters.proportional([2.0], [0.1], [[1.0]], [[1.0]])
        beta_hat = map_f(truth).to_vector() + np.array([0.001, -0.002, 0.003, 0.01])

        def objective(x):
            omega, zeta, r = x
            model = np.array([2 * zeta / omega, 1 / omega ** 2, r / omega ** 2, 0.0])
            return float(np.sum((beta_hat - model) ** 2))

        oracle = minimize(objective, [2.0, 0.1, 1.0], method="Nelder-Mead",
                          options={"xatol": 1e-12, "fatol": 1e-18, "maxiter": 20000, "maxfev": 40000})
        rho, trace = gauss_newton(beta_hat, None, truth, IpemOptions(max_iterations=100))
        assert trace.final_objective <= oracle.fun * (1 + 1e-6) + 1e-14
        assert rho.omegas[0] == pytest.approx(oracle.x[0], rel=1e-4)
        assert rho.zetas[0] == pytest.approx(oracle.x[1], rel=1e-4)

    def test_weighted_objective(self, general_rho):
        beta = map_f(general_rho).to_vector()
        size = beta.size
        variances = np.linspace(1.0, 2.0, size)
        estimate = CovarianceEstimate(np.diag(variances), np.diag(1 / variances), [f"b{i}" for i in range(size)])
        offset = np.full(size, 1e-3)
        _, trace = gauss_newton(beta + offset, estimate, general_rho, IpemOptions(max_iterations=1))
        assert trace.objectives[0] == pytest.approx(np.sum(offset ** 2 / variances), rel=1e-6)
        assert not trace.identity_weighting

    def test_relative_only_flagged(self, general_rho):
        beta = map_f(general_rho).to_vector()
        estimate = CovarianceEstimate.identity([f"b{i}" for i in range(beta.size)])
        _, trace = gauss_newton(beta, estimate, general_rho)
        assert trace.identity_weighting

    def test_data_cost_recorded(self, proportional_rho):
        beta_hat = map_f(proportional_rho).to_vector()
        calls = []
        start = perturbed(proportional_rho, 0.01, seed=3)
        _, trace = gauss_newton(beta_hat, None, start, IpemOptions(max_iterations=5),
                                data_cost=lambda rho: calls.append(rho) or float(len(calls)))
        assert len(trace.data_costs) == len(trace.objectives) == len(calls)

    def test_trace_records(self, proportional_rho):
        beta_hat = map_f(proportional_rho).to_vector()
        start = perturbed(proportional_rho, 0.01, seed=4)
        _, trace = gauss_newton(beta_hat, None, start, IpemOptions(max_iterations=3))
        records = trace.to_records()
        assert [r["iter"] for r in records] == list(range(trace.iterations + 1))
        assert np.isnan(records[0]["step_alpha"])
        assert trace.status in set(GaussNewtonStatus)

    def test_dimension_mismatch(self, general_rho):
        with pytest.raises(ValidationError):
            gauss_newton(np.zeros(3), None, general_rho)

    def test_covariance_dimension_mismatch(self, general_rho):
        beta = map_f(general_rho).to_vector()
        with pytest.raises(ValidationError):
            gauss_newton(beta, CovarianceEstimate.identity(["x", "y"]), general_rho)
