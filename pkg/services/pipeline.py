"""Two-stage fit orchestration and the thin synth/cmif/eval/realize drivers"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from app.models import FitConfig, GridSpec, InitializationMethod, SynthConfig
from core.config import validate_fit_paths
from core.error_handling import StageContext
from core.exceptions import ConfigurationError
from infrastructure.documents import (
    ADDITIVE_VERSION,
    MODAL_VERSION,
    STATE_SPACE_VERSION,
    AdditiveDocument,
    CovarianceSummary,
    FitReport,
    ModalDocument,
    ModeSummary,
    ResidualNorms,
    ResidueSummary,
    StageOneSummary,
    StageTwoSummary,
    StateSpaceDocument,
    read_document,
    write_covariance,
    write_json,
    write_table,
)
from infrastructure.frf_io import covariance_path, frf_columns, load_frf, save_cmif, save_frf
from services.additive_model import (
    AdditiveParameters,
    AdditiveStructure,
    SubmodelStructure,
    cost,
    eval_additive,
    weighted_residual_norms,
)
from services.frf_core import CmifCurves, FrfDataset, FrequencyWeighting, WeightingKind, build_weighting, cmif, pick_modes
from services.ipem import GaussNewtonTrace, gauss_newton, residue_profiles, svd_init
from services.modal_model import ModalParameters, eval_modal, map_f
from services.realization import StateSpace, eval_ss, realize
from services.riv import CovarianceEstimate, RivTrace, covariance, init_numerators, initial_denominator, riv_iterate
from services.synth import random_modal_system, simulate_frf

logger = logging.getLogger(__name__)

FAILED_MARKER = "FAILED_AFTER"

ADDITIVE_FILE = "additive.json"
MODAL_FILE = "modal.json"
STATE_SPACE_FILE = "statespace.json"
REPORT_FILE = "fit_report.json"
RIV_TRACE_FILE = "riv_trace.csv"
IPEM_TRACE_FILE = "ipem_trace.csv"
COST_EVOLUTION_FILE = "cost_evolution.csv"
CMIF_FILE = "cmif.csv"
SYNTH_FRF_FILE = "frf.csv"
SYNTH_TRUTH_FILE = "truth.json"
EVAL_FILE = "model_frf.csv"

RIV_TRACE_COLUMNS = ["iter", "cost", "param_rel_change"]
IPEM_TRACE_COLUMNS = ["iter", "objective", "step_alpha", "param_rel_change"]
COST_EVOLUTION_COLUMNS = ["iter", "stage", "cost"]


@dataclass
class FitResult:
    """Everything a fit run produced"""
    dataset: FrfDataset
    weighting: FrequencyWeighting
    initial_omegas: np.ndarray
    additive: AdditiveParameters
    riv_trace: RivTrace
    covariance: CovarianceEstimate
    initial_modal: ModalParameters
    modal: ModalParameters
    ipem_trace: GaussNewtonTrace
    state_space: StateSpace
    report: FitReport
    output_dir: Path


def initial_structure(n_outputs: int, n_inputs: int, n_rbm: int, n_flex: int, include_dc: bool) -> AdditiveStructure:
    """Rigid-body double integrator, one (2, 1, 0) submodel per mode, optional constant term"""
    submodels = []
    if n_rbm:
        submodels.append(SubmodelStructure(0, 0, 2))
    submodels.extend(SubmodelStructure(2, 1, 0) for _ in range(n_flex))
    if include_dc:
        submodels.append(SubmodelStructure(0, 0, 0))
    return AdditiveStructure(n_outputs, n_inputs, tuple(submodels))


def initial_denominators(structure: AdditiveStructure, omegas: Sequence[float], zeta: float) -> List[np.ndarray]:
    """Fixed Stage-1 denominators: one per flexible submodel from (ω, ζ), empty otherwise"""
    pending = iter(omegas)
    return [
        initial_denominator(next(pending), zeta) if orders.n_den == 2 else np.zeros(orders.n_den)
        for orders in structure.submodels
    ]


def cost_evolution(riv_trace: RivTrace, ipem_trace: GaussNewtonTrace) -> List[dict]:
    """One iteration axis across both stages; Stage 2 rows carry the data cost of f(ρ)"""
    records = [{"iter": j, "stage": 1, "cost": value} for j, value in enumerate(riv_trace.costs)]
    offset = len(riv_trace.costs)
    records.extend({"iter": offset + j, "stage": 2, "cost": value} for j, value in enumerate(ipem_trace.data_costs))
    return records


class FitPipeline:
    """Runs one two-stage fit and persists its artifacts as the stages complete"""

    def __init__(self, config: FitConfig):
        self.config = config
        self.output_dir = Path(config.output_dir)
        self.completed_stage: Optional[str] = None

    def _stage(self, name: str, **context) -> StageContext:
        return StageContext(name, logger, output_dir=str(self.output_dir), **context)

    def _done(self, stage: str) -> None:
        self.completed_stage = stage

    def preflight(self) -> None:
        """Check inputs and the output directory before anything is written"""
        config = self.config
        companion = None
        if config.weighting.kind == WeightingKind.INVERSE_VARIANCE and "var" not in frf_columns(config.frf):
            companion = str(covariance_path(config.frf))
        is_valid, report = validate_fit_paths(config.frf, str(self.output_dir), companion, config.n_rbm)
        if not is_valid:
            raise ConfigurationError("fit configuration failed pre-flight checks", details=report["errors"])

    def _initial_omegas(self, dataset: FrfDataset) -> np.ndarray:
        init = self.config.initialization
        if init.method == InitializationMethod.EXPLICIT:
            return 2.0 * np.pi * np.asarray(sorted(init.frequencies_hz), dtype=float)

        with self._stage("cmif"):
            curves = cmif(dataset)
            save_cmif(curves, self.output_dir / CMIF_FILE)
            peaks = pick_modes(curves, init.prominence_factor, init.max_modes)
            if any(peak.multiplicity > 1 for peak in peaks):
                logger.warning("CMIF reports coincident modes; each peak initializes a single mode")
        self._done("cmif")
        return np.array([peak.omega for peak in peaks])

    def run(self) -> FitResult:
        self.preflight()
        stale = self.output_dir / FAILED_MARKER
        if stale.exists():
            stale.unlink()
        try:
            return self._run()
        except Exception:
            if self.completed_stage is not None:
                (self.output_dir / FAILED_MARKER).write_text(self.completed_stage + "\n", encoding="utf-8")
            logger.error(f"Fit failed after stage '{self.completed_stage}'")
            raise

    def _run(self) -> FitResult:
        config, out = self.config, self.output_dir

        with self._stage("load"):
            dataset = load_frf(config.frf, config.min_freq_hz)
        self._done("load")

        with self._stage("weighting"):
            weighting = build_weighting(dataset, config.weighting)
        self._done("weighting")

        omegas = self._initial_omegas(dataset)
        if omegas.size == 0 and config.n_rbm == 0 and not config.include_dc:
            raise ConfigurationError("no modes to fit: no flexible modes found, n_rbm is 0 and include_dc is off")

        with self._stage("init", n_flex=int(omegas.size)):
            structure = initial_structure(dataset.n_outputs, dataset.n_inputs, config.n_rbm, omegas.size, config.include_dc)
            poles = initial_denominators(structure, omegas, config.initial_zeta)
            initial = init_numerators(dataset, structure, poles, weighting)
        self._done("init")

        with self._stage("riv"):
            additive, riv_trace = riv_iterate(dataset, initial, weighting, config.riv)
            write_json(out / ADDITIVE_FILE, AdditiveDocument.from_params(additive))
            write_table(out / RIV_TRACE_FILE, riv_trace.to_records(), RIV_TRACE_COLUMNS)
        self._done("riv")

        with self._stage("covariance"):
            sigma_beta = covariance(dataset, additive, weighting, config.covariance_formula)
            write_covariance(out, sigma_beta)
        self._done("covariance")

        with self._stage("svd_init"):
            rho0 = svd_init(additive, config.damping_model, config.n_rbm)
            profiles = residue_profiles(additive, config.damping_model)
        self._done("svd_init")

        with self._stage("gauss_newton"):
            rho, ipem_trace = gauss_newton(
                additive.to_vector(), sigma_beta, rho0, config.ipem,
                data_cost=lambda candidate: cost(dataset, map_f(candidate), weighting)
            )
            write_json(out / MODAL_FILE, ModalDocument.from_modal(rho))
            write_table(out / IPEM_TRACE_FILE, ipem_trace.to_records(), IPEM_TRACE_COLUMNS)
            write_table(out / COST_EVOLUTION_FILE, cost_evolution(riv_trace, ipem_trace), COST_EVOLUTION_COLUMNS)
        self._done("gauss_newton")

        with self._stage("realize"):
            state_space = realize(rho)
            write_json(out / STATE_SPACE_FILE, StateSpaceDocument.from_state_space(state_space))
        self._done("realize")

        report = self._report(dataset, weighting, omegas, riv_trace, sigma_beta, rho, ipem_trace, additive, profiles)
        write_json(out / REPORT_FILE, report)
        logger.info(
            f"Fit complete: Stage-1 cost {riv_trace.costs[-1]:.6e}, Stage-2 objective {ipem_trace.final_objective:.6e}, "
            f"{rho.n_rbm} rigid-body and {rho.n_flex} flexible modes"
        )
        return FitResult(
            dataset, weighting, omegas, additive, riv_trace, sigma_beta, rho0, rho, ipem_trace, state_space, report, out
        )

    def _report(self, dataset, weighting, omegas, riv_trace, sigma_beta, rho, ipem_trace, additive, profiles) -> FitReport:
        config = self.config
        modal_additive = map_f(rho)
        flexible = [profile for profile in profiles if profile.kind == "flexible"]
        modes = [
            ModeSummary(
                index=i,
                frequency_hz=float(rho.natural_frequencies_hz()[i]),
                damping_ratio=float(rho.damping_ratios()[i]),
                initial_frequency_hz=float(omegas[i] / (2.0 * np.pi)),
                discarded_mass=float(flexible[i].discarded_mass)
            )
            for i in range(rho.n_flex)
        ]
        return FitReport(
            frf=str(config.frf),
            n_points=dataset.n_points,
            n_outputs=dataset.n_outputs,
            n_inputs=dataset.n_inputs,
            damping_model=config.damping_model,
            weighting=config.weighting.kind.value,
            initialization=config.initialization.method.value,
            n_rbm=rho.n_rbm,
            n_flex=rho.n_flex,
            include_dc=rho.has_dc,
            stage1=StageOneSummary(
                initial_cost=riv_trace.costs[0],
                cost=riv_trace.costs[-1],
                iterations=riv_trace.iterations,
                converged=riv_trace.converged
            ),
            covariance=CovarianceSummary(
                formula=sigma_beta.formula.value,
                relative_only=sigma_beta.relative_only,
                dimension=sigma_beta.dimension
            ),
            stage2=StageTwoSummary(
                initial_objective=ipem_trace.objectives[0],
                objective=ipem_trace.final_objective,
                data_cost=cost(dataset, modal_additive, weighting),
                iterations=ipem_trace.iterations,
                status=ipem_trace.status.value,
                identity_weighting=ipem_trace.identity_weighting
            ),
            modes=modes,
            residue_profiles=[
                ResidueSummary(
                    kind=profile.kind,
                    index=profile.index,
                    singular_values=profile.singular_values.tolist(),
                    discarded_mass=float(profile.discarded_mass)
                )
                for profile in profiles
            ],
            residual_norms=ResidualNorms(
                frequency_hz=dataset.grid.frequencies_hz.tolist(),
                additive=weighted_residual_norms(dataset, additive, weighting).tolist(),
                modal=weighted_residual_norms(dataset, modal_additive, weighting).tolist()
            )
        )


def run_fit(config: FitConfig) -> FitResult:
    return FitPipeline(config).run()


def run_synth(config: SynthConfig, output_dir: str) -> FrfDataset:
    """Random modal system, its noisy FRF and the ground truth, written side by side"""
    out = Path(output_dir)
    with StageContext("synth", logger, output_dir=str(out)):
        rho = random_modal_system(config.system)
        grid = config.grid.to_grid()
        dataset = simulate_frf(rho, grid, config.system.noise, config.system.seed)
        hz = np.asarray(config.grid.frequencies_hz) if config.grid.frequencies_hz is not None else None
        save_frf(dataset, out / SYNTH_FRF_FILE, hz)
        write_json(out / SYNTH_TRUTH_FILE, ModalDocument.from_modal(rho))
    return dataset


def run_cmif(frf_path: str, output_dir: str, min_freq_hz: float = 0.0) -> CmifCurves:
    with StageContext("cmif", logger, frf=frf_path):
        curves = cmif(load_frf(frf_path, min_freq_hz))
        save_cmif(curves, Path(output_dir) / CMIF_FILE)
    return curves


def run_eval(model_path: str, grid: GridSpec, output_dir: str) -> FrfDataset:
    """FRF of a stored additive, modal or state-space model on a grid"""
    with StageContext("eval", logger, model=model_path):
        document = read_document(model_path, expected=[ADDITIVE_VERSION, MODAL_VERSION, STATE_SPACE_VERSION])
        frequency_grid = grid.to_grid()
        if isinstance(document, ModalDocument):
            values = eval_modal(document.to_modal(), frequency_grid.s)
        elif isinstance(document, AdditiveDocument):
            values = eval_additive(document.to_params(), frequency_grid.s)
        else:
            values = eval_ss(document.to_state_space(), frequency_grid.s)
        dataset = FrfDataset(frequency_grid, values)
        hz = np.asarray(grid.frequencies_hz) if grid.frequencies_hz is not None else None
        save_frf(dataset, Path(output_dir) / EVAL_FILE, hz)
    return dataset


def run_realize(model_path: str, output_dir: str) -> StateSpace:
    with StageContext("realize", logger, model=model_path):
        document = read_document(model_path, expected=[MODAL_VERSION])
        state_space = realize(document.to_modal())
        write_json(Path(output_dir) / STATE_SPACE_FILE, StateSpaceDocument.from_state_space(state_space))
    return state_space
