"""
End-to-end tests for the two-stage fit and the thin drivers.
"""
import time

import numpy as np
import pandas as pd
import pytest

from app.models import FitConfig, GridSpec, SynthConfig, build_config
from core.exceptions import ConfigurationError, StageFailure, ValidationError
from infrastructure.documents import AdditiveDocument, ModalDocument, read_document, write_json
from infrastructure.frf_io import save_frf
from services.frf_core import FrequencyGrid
from services.ipem import GaussNewtonTrace
from services.modal_model import DampingModel, ModalParameters, map_f
from services.pipeline import (
    FAILED_MARKER,
    FitPipeline,
    cost_evolution,
    initial_denominators,
    initial_structure,
    run_eval,
    run_fit,
    run_realize,
    run_synth,
)
from services.riv import RivTrace
from services.synth import SynthSpec, random_modal_system, simulate_frf

FIT_ARTIFACTS = [
    "additive.json", "modal.json", "statespace.json", "fit_report.json",
    "riv_trace.csv", "ipem_trace.csv", "cost_evolution.csv", "covariance.csv", "covariance.json",
]


def fit_config(frf, out, **overrides):
    data = {"frf": str(frf), "output_dir": str(out), "riv": {"max_iterations": 40}}
    data.update(overrides)
    return build_config(FitConfig, data)


class TestHelpers:

    def test_initial_structure(self):
        structure = initial_structure(2, 3, 1, 2, True)
        assert [(s.n_den, s.n_num, s.n_int) for s in structure.submodels] == [(0, 0, 2), (2, 1, 0), (2, 1, 0), (0, 0, 0)]

    def test_initial_denominators(self):
        structure = initial_structure(1, 1, 1, 1, False)
        poles = initial_denominators(structure, [2.0], 0.1)
        assert poles[0].size == 0
        np.testing.assert_allclose(poles[1], [0.1, 0.25])

    def test_cost_evolution_axis(self):
        riv = RivTrace(costs=[3.0, 2.0, 1.0])
        ipem = GaussNewtonTrace(objectives=[1.0, 0.5], data_costs=[1.1, 0.9])
        records = cost_evolution(riv, ipem)
        assert [r["iter"] for r in records] == [0, 1, 2, 3, 4]
        assert [r["stage"] for r in records] == [1, 1, 1, 2, 2]
        assert records[-1]["cost"] == 0.9


class TestConfig:

    def test_explicit_needs_frequencies(self):
        with pytest.raises(ConfigurationError):
            build_config(FitConfig, {"frf": "x.csv", "initialization": {"method": "explicit"}})

    def test_unknown_field(self):
        with pytest.raises(ConfigurationError) as info:
            build_config(FitConfig, {"frf": "x.csv", "tolerance": 1})
        assert "tolerance" in info.value.details["fields"]

    def test_grid_definition(self):
        with pytest.raises(ConfigurationError):
            build_config(GridSpec, {"frequencies_hz": [1.0], "n_points": 3})
        grid = build_config(GridSpec, {"f_min_hz": 1.0, "f_max_hz": 100.0, "n_points": 3}).to_grid()
        np.testing.assert_allclose(grid.frequencies_hz, [1.0, 10.0, 100.0])

    def test_linear_grid(self):
        grid = build_config(GridSpec, {"f_min_hz": 1.0, "f_max_hz": 3.0, "n_points": 3, "spacing": "linear"}).to_grid()
        np.testing.assert_allclose(grid.frequencies_hz, [1.0, 2.0, 3.0])


class TestFitPipeline:

    def test_missing_frf_writes_nothing(self, tmp_path):
        out = tmp_path / "out"
        with pytest.raises(ConfigurationError):
            run_fit(fit_config(tmp_path / "absent.csv", out))
        assert not out.exists()

    def test_failure_marker(self, general_dataset, tmp_path):
        frf = save_frf(general_dataset, tmp_path / "frf.csv")
        out = tmp_path / "out"
        config = fit_config(frf, out, initialization={"method": "explicit", "frequencies_hz": [1.0, 1.0]})
        with pytest.raises(StageFailure) as info:
            FitPipeline(config).run()
        assert info.value.stage == "init"
        assert isinstance(info.value.cause, ValidationError)
        assert (out / FAILED_MARKER).read_text().strip() == "weighting"
        assert not (out / "additive.json").exists()

    @pytest.mark.slow
    def test_proportional_fit_with_rigid_body(self, proportional_rho, proportional_dataset, tmp_path):
        frf = save_frf(proportional_dataset, tmp_path / "frf.csv")
        out = tmp_path / "fit"
        config = fit_config(
            frf, out,
            damping_model="proportional", n_rbm=1,
            initialization={"method": "explicit", "frequencies_hz": [1.05, 2.85]},
        )
        result = run_fit(config)

        for name in FIT_ARTIFACTS:
            assert (out / name).is_file(), name
        assert not (out / FAILED_MARKER).exists()
        assert result.modal.damping_model == DampingModel.PROPORTIONAL
        np.testing.assert_allclose(result.modal.natural_frequencies_hz(), [1.0, 3.0], rtol=1e-6)
        np.testing.assert_allclose(result.modal.damping_ratios(), [0.02, 0.03], rtol=1e-5)
        np.testing.assert_allclose(result.modal.rigid_residue(), proportional_rho.rigid_residue(), rtol=1e-6)
        assert result.covariance.relative_only
        assert result.ipem_trace.identity_weighting

        evolution = pd.read_csv(out / "cost_evolution.csv")
        assert list(evolution.columns) == ["iter", "stage", "cost"]
        assert evolution["iter"].tolist() == list(range(len(evolution)))
        assert set(evolution["stage"]) == {1, 2}

        report = read_document(out / "fit_report.json")
        assert report.n_rbm == 1 and report.n_flex == 2
        assert report.initialization == "explicit"
        assert len(report.residual_norms.modal) == proportional_dataset.n_points

    @pytest.mark.slow
    def test_general_fit_from_cmif(self, general_rho, general_dataset, tmp_path):
        frf = save_frf(general_dataset, tmp_path / "frf.csv")
        out = tmp_path / "fit"
        result = run_fit(fit_config(frf, out))

        assert (out / "cmif.csv").is_file()
        assert result.modal.n_flex == 2
        np.testing.assert_allclose(result.modal.eigenvalues, general_rho.eigenvalues, rtol=1e-6)
        np.testing.assert_allclose(result.modal.residues(), general_rho.residues(), rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(result.initial_omegas, np.abs(general_rho.eigenvalues), rtol=0.02)

    def test_stale_marker_removed(self, general_dataset, tmp_path):
        frf = save_frf(general_dataset, tmp_path / "frf.csv")
        out = tmp_path / "out"
        out.mkdir()
        (out / FAILED_MARKER).write_text("load\n")
        config = fit_config(frf, out, initialization={"method": "explicit", "frequencies_hz": [1.0, 1.0]})
        with pytest.raises(StageFailure):
            FitPipeline(config).run()
        assert (out / FAILED_MARKER).read_text().strip() == "weighting"


class TestDrivers:

    def test_synth_then_realize(self, tmp_path):
        spec = SynthSpec(n_outputs=2, n_inputs=1, n_flex=2, band_hz=(1.0, 10.0))
        config = SynthConfig(system=spec, grid=GridSpec(f_min_hz=0.5, f_max_hz=20.0, n_points=50))
        dataset = run_synth(config, str(tmp_path))
        assert dataset.n_points == 50
        assert (tmp_path / "frf.csv").is_file()
        truth = read_document(tmp_path / "truth.json")
        assert isinstance(truth, ModalDocument)
        state_space = run_realize(str(tmp_path / "truth.json"), str(tmp_path))
        assert state_space.n_states == 4
        assert (tmp_path / "statespace.json").is_file()

    def test_eval_modal_document(self, tmp_path):
        rho = ModalParameters.general([], [], [], [[1.0]], [[1.0]])
        model = write_json(tmp_path / "modal.json", ModalDocument.from_modal(rho))
        dataset = run_eval(str(model), GridSpec(frequencies_hz=[1.0 / (2 * np.pi)]), str(tmp_path))
        np.testing.assert_allclose(dataset.frf, [[[-1.0]]])
        frame = pd.read_csv(tmp_path / "model_frf.csv")
        assert frame["re"].iloc[0] == pytest.approx(-1.0)

    def test_realize_rejects_additive_document(self, general_rho, tmp_path):
        model = write_json(tmp_path / "additive.json", AdditiveDocument.from_params(map_f(general_rho)))
        with pytest.raises(StageFailure) as info:
            run_realize(str(model), str(tmp_path))
        assert info.value.exit_code == 4


def fit_synthetic(dataset, truth, out, initial_hz, **overrides):
    """Explicitly initialized fit of a simulated dataset with the truth's model class"""
    frf = save_frf(dataset, out.parent / f"{out.name}.csv")
    config = fit_config(
        frf, out,
        damping_model=truth.damping_model.value, n_rbm=truth.n_rbm,
        initialization={"method": "explicit", "frequencies_hz": list(initial_hz)},
        **overrides
    )
    return run_fit(config)


def by_frequency(rho):
    order = np.argsort(np.abs(rho.eigenvalues))
    return rho.eigenvalues[order], rho.residues()[order]


class TestStageContext:

    def test_stage_carries_context(self, tmp_path):
        config = fit_config(tmp_path / "frf.csv", tmp_path / "out")
        stage = FitPipeline(config)._stage("init", n_flex=3)
        assert stage.context["n_flex"] == 3
        assert stage.context["output_dir"] == str(tmp_path / "out")

    def test_explicit_fit_passes_init(self, general_dataset, tmp_path):
        frf = save_frf(general_dataset, tmp_path / "frf.csv")
        config = fit_config(
            frf, tmp_path / "out", riv={"max_iterations": 2},
            initialization={"method": "explicit", "frequencies_hz": [1.02, 2.95]}
        )
        pipeline = FitPipeline(config)
        pipeline.run()
        assert pipeline.completed_stage == "realize"


@pytest.mark.slow
class TestSyntheticRecovery:
    """Noiseless and noisy recovery of random systems with two rigid-body modes"""

    GRID = FrequencyGrid.from_hz(np.geomspace(1.0, 400.0, 800))

    @staticmethod
    def truth(damping_model):
        return random_modal_system(SynthSpec(
            n_outputs=2, n_inputs=3, n_rbm=2, n_flex=4, band_hz=(10.0, 200.0),
            damping_range=(0.005, 0.05), damping_model=damping_model, seed=0
        ))

    @pytest.mark.parametrize("damping_model, offset", [
        (DampingModel.PROPORTIONAL, 1.1),
        (DampingModel.GENERAL, 0.9),
    ])
    def test_noiseless_recovery(self, damping_model, offset, tmp_path):
        truth = self.truth(damping_model)
        dataset = simulate_frf(truth, self.GRID)

        started = time.perf_counter()
        result = fit_synthetic(dataset, truth, tmp_path / "fit", offset * truth.natural_frequencies_hz())
        elapsed = time.perf_counter() - started

        assert result.report.stage1.cost < 1e-18
        fitted_lambdas, fitted_residues = by_frequency(result.modal)
        true_lambdas, true_residues = by_frequency(truth)
        np.testing.assert_allclose(fitted_lambdas, true_lambdas, rtol=1e-8)
        for fitted, true in zip(fitted_residues, true_residues):
            assert np.linalg.norm(fitted - true) < 1e-6 * np.linalg.norm(true)
        np.testing.assert_allclose(result.modal.rigid_residue(), truth.rigid_residue(), rtol=1e-6, atol=1e-12)
        assert np.all(np.diff(result.ipem_trace.objectives) <= 0.0)
        assert elapsed < 10.0

    def test_one_percent_noise(self, tmp_path):
        truth = self.truth(DampingModel.PROPORTIONAL)
        true_hz, true_zeta = truth.natural_frequencies_hz(), truth.damping_ratios()
        order = np.argsort(true_hz)
        frequency_errors, damping_errors = [], []
        for seed in range(20):
            dataset = simulate_frf(truth, self.GRID, 0.01, seed=seed)
            result = fit_synthetic(dataset, truth, tmp_path / f"seed{seed}", 1.1 * true_hz)
            assert np.all(np.diff(result.ipem_trace.objectives) <= 0.0)
            fitted = np.argsort(result.modal.natural_frequencies_hz())
            frequency_errors.append(
                np.abs(result.modal.natural_frequencies_hz()[fitted] / true_hz[order] - 1.0)
            )
            damping_errors.append(np.abs(result.modal.damping_ratios()[fitted] / true_zeta[order] - 1.0))

        assert np.all(np.median(frequency_errors, axis=0) < 1e-3)
        assert np.all(np.median(damping_errors, axis=0) < 5e-2)


@pytest.mark.slow
class TestWaferStage:
    """4×13 fit with 3 rigid-body and 17 flexible modes at 1% noise"""

    def test_fit_within_budget(self, wafer_rho, wafer_grid, tmp_path):
        dataset = simulate_frf(wafer_rho, wafer_grid, 0.01, seed=5)

        started = time.perf_counter()
        result = fit_synthetic(
            dataset, wafer_rho, tmp_path / "fit", 1.03 * wafer_rho.natural_frequencies_hz(),
            min_freq_hz=20.0, riv={"max_iterations": 10}, ipem={"max_iterations": 40}
        )
        elapsed = time.perf_counter() - started

        report = result.report
        assert elapsed < 120.0
        assert report.n_rbm == 3 and report.n_flex == 17
        assert report.stage2.data_cost <= 2.0 * report.stage1.cost
        flexible = [profile for profile in report.residue_profiles if profile.kind == "flexible"]
        assert len(flexible) == 17
        assert all(profile.singular_values[1] < 0.2 for profile in flexible)
        assert np.all(np.diff(result.ipem_trace.objectives) <= 0.0)
        np.testing.assert_allclose(
            np.sort(result.modal.natural_frequencies_hz()), wafer_rho.natural_frequencies_hz(), rtol=1e-3
        )
