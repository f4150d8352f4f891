"""Versioned JSON documents, covariance export and trace/report writers"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, model_validator

from core.exceptions import ArtifactIOError, DataFormatError
from services.additive_model import AdditiveParameters, AdditiveStructure, SubmodelStructure
from services.modal_model import DampingModel, ModalParameters
from services.realization import StateSpace
from services.riv import CovarianceEstimate

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

ADDITIVE_VERSION = "additive-v1"
MODAL_VERSION = "modal-v1"
STATE_SPACE_VERSION = "ss-v1"
COVARIANCE_VERSION = "covariance-v1"
REPORT_VERSION = "fit-report-v1"


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SubmodelOrders(_Document):
    n: int = Field(ge=0)
    m: int = Field(ge=0)
    l: int = Field(ge=0)


class AdditiveDocument(_Document):
    """Structure block plus flat β in the fixed layout"""
    version: Literal["additive-v1"] = ADDITIVE_VERSION
    n_outputs: int = Field(ge=1)
    n_inputs: int = Field(ge=1)
    submodels: List[SubmodelOrders]
    beta: List[float]

    @classmethod
    def from_params(cls, params: AdditiveParameters) -> "AdditiveDocument":
        structure = params.structure
        return cls(
            n_outputs=structure.n_outputs,
            n_inputs=structure.n_inputs,
            submodels=[SubmodelOrders(n=s.n_den, m=s.n_num, l=s.n_int) for s in structure.submodels],
            beta=params.to_vector().tolist()
        )

    def to_params(self) -> AdditiveParameters:
        structure = AdditiveStructure(
            self.n_outputs, self.n_inputs, tuple(SubmodelStructure(s.n, s.m, s.l) for s in self.submodels)
        )
        return AdditiveParameters.from_vector(structure, np.asarray(self.beta))


class ModeRecord(_Document):
    """One flexible mode; general modes carry λ and complex shapes, proportional ones ω, ζ and real shapes"""
    frequency_hz: float
    damping_ratio: float
    lambda_re: Optional[float] = None
    lambda_im: Optional[float] = None
    omega: Optional[float] = None
    zeta: Optional[float] = None
    left_re: List[float]
    left_im: Optional[List[float]] = None
    right_re: List[float]
    right_im: Optional[List[float]] = None


class RigidBodyRecord(_Document):
    phi_l: List[float]
    phi_r: List[float]


class ModalDocument(_Document):
    version: Literal["modal-v1"] = MODAL_VERSION
    damping_model: DampingModel
    n_outputs: int = Field(ge=1)
    n_inputs: int = Field(ge=1)
    n_rbm: int = Field(ge=0)
    n_flex: int = Field(ge=0)
    rigid_body: List[RigidBodyRecord]
    modes: List[ModeRecord]
    dc_gain: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def check_counts(self) -> "ModalDocument":
        if len(self.rigid_body) != self.n_rbm or len(self.modes) != self.n_flex:
            raise ValueError("n_rbm/n_flex do not match the listed modes")
        general = self.damping_model == DampingModel.GENERAL
        for i, mode in enumerate(self.modes):
            if general and (mode.lambda_re is None or mode.lambda_im is None or mode.left_im is None or mode.right_im is None):
                raise ValueError(f"general mode {i} needs lambda_re, lambda_im, left_im and right_im")
            if not general and (mode.omega is None or mode.zeta is None):
                raise ValueError(f"proportional mode {i} needs omega and zeta")
        return self

    @classmethod
    def from_modal(cls, rho: ModalParameters) -> "ModalDocument":
        general = rho.damping_model == DampingModel.GENERAL
        modes = []
        for i in range(rho.n_flex):
            lam = rho.eigenvalues[i]
            record = {
                "frequency_hz": float(rho.natural_frequencies_hz()[i]),
                "damping_ratio": float(rho.damping_ratios()[i]),
                "left_re": rho.left[i].real.tolist(),
                "right_re": rho.right[i].real.tolist(),
            }
            if general:
                record.update(
                    lambda_re=float(lam.real), lambda_im=float(lam.imag),
                    left_im=rho.left[i].imag.tolist(), right_im=rho.right[i].imag.tolist()
                )
            else:
                record.update(omega=float(rho.omegas[i]), zeta=float(rho.zetas[i]))
            modes.append(ModeRecord(**record))
        return cls(
            damping_model=rho.damping_model,
            n_outputs=rho.n_outputs,
            n_inputs=rho.n_inputs,
            n_rbm=rho.n_rbm,
            n_flex=rho.n_flex,
            rigid_body=[RigidBodyRecord(phi_l=l.tolist(), phi_r=r.tolist()) for l, r in zip(rho.rigid_left, rho.rigid_right)],
            modes=modes,
            dc_gain=rho.dc_gain.tolist() if rho.has_dc else None
        )

    def to_modal(self) -> ModalParameters:
        sizes = {"n_outputs": self.n_outputs, "n_inputs": self.n_inputs}
        rigid_left = [r.phi_l for r in self.rigid_body]
        rigid_right = [r.phi_r for r in self.rigid_body]
        if self.damping_model == DampingModel.GENERAL:
            return ModalParameters.general(
                [complex(m.lambda_re, m.lambda_im) for m in self.modes],
                [np.asarray(m.left_re) + 1j * np.asarray(m.left_im) for m in self.modes],
                [np.asarray(m.right_re) + 1j * np.asarray(m.right_im) for m in self.modes],
                rigid_left, rigid_right, self.dc_gain, **sizes
            )
        return ModalParameters.proportional(
            [m.omega for m in self.modes], [m.zeta for m in self.modes],
            [m.left_re for m in self.modes], [m.right_re for m in self.modes],
            rigid_left, rigid_right, self.dc_gain, **sizes
        )


class StateSpaceDocument(_Document):
    """Dense row-major A, B, C, D"""
    version: Literal["ss-v1"] = STATE_SPACE_VERSION
    n_states: int = Field(ge=0)
    n_outputs: int = Field(ge=1)
    n_inputs: int = Field(ge=1)
    A: List[List[float]]
    B: List[List[float]]
    C: List[List[float]]
    D: List[List[float]]

    @classmethod
    def from_state_space(cls, ss: StateSpace) -> "StateSpaceDocument":
        return cls(
            n_states=ss.n_states, n_outputs=ss.n_outputs, n_inputs=ss.n_inputs,
            A=ss.A.tolist(), B=ss.B.tolist(), C=ss.C.tolist(), D=ss.D.tolist()
        )

    def to_state_space(self) -> StateSpace:
        n, n_y, n_u = self.n_states, self.n_outputs, self.n_inputs
        return StateSpace(
            np.asarray(self.A, dtype=float).reshape(n, n),
            np.asarray(self.B, dtype=float).reshape(n, n_u),
            np.asarray(self.C, dtype=float).reshape(n_y, n),
            np.asarray(self.D, dtype=float).reshape(n_y, n_u)
        )


class ParameterEntry(_Document):
    index: int
    label: str


class CovarianceSidecar(_Document):
    """Index → parameter-name map for covariance.csv (upper triangle, 0-based indices)"""
    version: Literal["covariance-v1"] = COVARIANCE_VERSION
    dimension: int
    formula: str
    relative_only: bool
    storage: Literal["upper-triangle"] = "upper-triangle"
    parameters: List[ParameterEntry]


class StageOneSummary(_Document):
    initial_cost: float
    cost: float
    iterations: int
    converged: bool


class StageTwoSummary(_Document):
    initial_objective: float
    objective: float
    data_cost: float
    iterations: int
    status: str
    identity_weighting: bool


class CovarianceSummary(_Document):
    formula: str
    relative_only: bool
    dimension: int


class ModeSummary(_Document):
    index: int
    frequency_hz: float
    damping_ratio: float
    initial_frequency_hz: float
    discarded_mass: float


class ResidueSummary(_Document):
    kind: str
    index: int
    singular_values: List[float]
    discarded_mass: float


class ResidualNorms(_Document):
    """Per-frequency sqrt(vec(E)ᴴ W vec(E)) of both model stages"""
    frequency_hz: List[float]
    additive: List[float]
    modal: List[float]


class FitReport(_Document):
    version: Literal["fit-report-v1"] = REPORT_VERSION
    frf: str
    n_points: int
    n_outputs: int
    n_inputs: int
    damping_model: DampingModel
    weighting: str
    initialization: str
    n_rbm: int
    n_flex: int
    include_dc: bool
    stage1: StageOneSummary
    covariance: CovarianceSummary
    stage2: StageTwoSummary
    modes: List[ModeSummary]
    residue_profiles: List[ResidueSummary]
    residual_norms: ResidualNorms


Document = Union[AdditiveDocument, ModalDocument, StateSpaceDocument, CovarianceSidecar, FitReport]

_DOCUMENT_TYPES = {
    ADDITIVE_VERSION: AdditiveDocument,
    MODAL_VERSION: ModalDocument,
    STATE_SPACE_VERSION: StateSpaceDocument,
    COVARIANCE_VERSION: CovarianceSidecar,
    REPORT_VERSION: FitReport,
}


def write_json(path: PathLike, payload: Union[BaseModel, Dict[str, Any]]) -> Path:
    """Deterministic JSON: fixed key order, no timestamps, trailing newline"""
    path = Path(path)
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=False, allow_nan=False) + "\n", encoding="utf-8")
    except (OSError, ValueError) as e:
        raise ArtifactIOError(str(path), f"cannot write JSON document: {e}")
    logger.debug(f"Wrote {path}")
    return path


def read_document(path: PathLike, expected: Optional[Sequence[str]] = None) -> Document:
    """Load and schema-validate a versioned document"""
    path = Path(path)
    if not path.is_file():
        raise ArtifactIOError(str(path), "file not found")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ArtifactIOError(str(path), f"cannot read document: {e}")
    except json.JSONDecodeError as e:
        raise DataFormatError(str(path), f"invalid JSON: {e}")

    version = raw.get("version") if isinstance(raw, dict) else None
    if version not in _DOCUMENT_TYPES or (expected is not None and version not in expected):
        allowed = ", ".join(expected or _DOCUMENT_TYPES)
        raise ArtifactIOError(str(path), f"unsupported document version {version!r} (expected one of {allowed})")
    try:
        return _DOCUMENT_TYPES[version].model_validate(raw)
    except PydanticValidationError as e:
        raise DataFormatError(str(path), f"document does not match the {version} schema: {e.errors()[0]['msg']}")


def write_covariance(directory: PathLike, estimate: CovarianceEstimate) -> Path:
    """covariance.csv (row,col,value over the nonzero upper triangle) plus covariance.json"""
    directory = Path(directory)
    rows, cols = np.triu_indices(estimate.dimension)
    values = estimate.matrix[rows, cols]
    nonzero = values != 0.0
    frame = pd.DataFrame({"row": rows[nonzero], "col": cols[nonzero], "value": values[nonzero]})
    path = directory / "covariance.csv"
    try:
        directory.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise ArtifactIOError(str(path), f"cannot write covariance: {e}")
    write_json(directory / "covariance.json", CovarianceSidecar(
        dimension=estimate.dimension,
        formula=estimate.formula.value,
        relative_only=estimate.relative_only,
        parameters=[ParameterEntry(index=i, label=label) for i, label in enumerate(estimate.parameter_labels)]
    ))
    return path


def read_covariance(directory: PathLike) -> np.ndarray:
    """Symmetric Σ̂_β rebuilt from covariance.csv and its sidecar"""
    directory = Path(directory)
    sidecar = read_document(directory / "covariance.json", expected=[COVARIANCE_VERSION])
    path = directory / "covariance.csv"
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as e:
        raise ArtifactIOError(str(path), f"cannot read covariance: {e}")
    if list(frame.columns) != ["row", "col", "value"]:
        raise DataFormatError(str(path), "header must be row,col,value")
    matrix = np.zeros((sidecar.dimension, sidecar.dimension))
    rows, cols = frame["row"].to_numpy(int), frame["col"].to_numpy(int)
    matrix[rows, cols] = frame["value"].to_numpy(float)
    matrix[cols, rows] = frame["value"].to_numpy(float)
    return matrix


def write_table(path: PathLike, records: List[Dict[str, Any]], columns: Sequence[str]) -> Path:
    """CSV of per-iteration records with a fixed column order"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(records, columns=list(columns)).to_csv(path, index=False, na_rep="nan", lineterminator="\n")
    except OSError as e:
        raise ArtifactIOError(str(path), f"cannot write table: {e}")
    return path


