"""Pydantic models for run configuration"""
import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Type, TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, model_validator

from core.exceptions import ArtifactIOError, ConfigurationError
from services.frf_core import FrequencyGrid, WeightingScheme
from services.ipem import IpemOptions
from services.modal_model import DampingModel
from services.riv import CovarianceFormula, RivOptions
from services.synth import SynthSpec

ConfigModel = TypeVar("ConfigModel", bound=BaseModel)


class InitializationMethod(str, Enum):
    EXPLICIT = "explicit"
    CMIF = "cmif"


class GridSpacing(str, Enum):
    LOG = "log"
    LINEAR = "linear"


class ModeInitialization(BaseModel):
    """Where the initial flexible-mode frequencies come from"""
    model_config = ConfigDict(extra="forbid")

    method: InitializationMethod = InitializationMethod.CMIF
    frequencies_hz: Optional[List[float]] = None
    prominence_factor: float = Field(default=10.0, gt=1.0)
    max_modes: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def check_frequencies(self) -> "ModeInitialization":
        if self.method == InitializationMethod.EXPLICIT:
            if not self.frequencies_hz:
                raise ValueError("explicit initialization needs frequencies_hz")
            if any(not (f > 0.0 and np.isfinite(f)) for f in self.frequencies_hz):
                raise ValueError("initial frequencies must be finite and positive")
        return self


class GridSpec(BaseModel):
    """Evaluation grid: explicit frequencies or a log/linear range"""
    model_config = ConfigDict(extra="forbid")

    frequencies_hz: Optional[List[float]] = None
    f_min_hz: Optional[float] = Field(default=None, gt=0)
    f_max_hz: Optional[float] = Field(default=None, gt=0)
    n_points: Optional[int] = Field(default=None, ge=1)
    spacing: GridSpacing = GridSpacing.LOG

    @model_validator(mode="after")
    def check_definition(self) -> "GridSpec":
        ranged = (self.f_min_hz, self.f_max_hz, self.n_points)
        if self.frequencies_hz is not None:
            if any(value is not None for value in ranged):
                raise ValueError("give either frequencies_hz or f_min_hz/f_max_hz/n_points, not both")
        elif any(value is None for value in ranged):
            raise ValueError("a ranged grid needs f_min_hz, f_max_hz and n_points")
        elif self.n_points > 1 and self.f_min_hz >= self.f_max_hz:
            raise ValueError("f_min_hz must be below f_max_hz")
        return self

    def to_grid(self) -> FrequencyGrid:
        if self.frequencies_hz is not None:
            return FrequencyGrid.from_hz(self.frequencies_hz)
        if self.spacing == GridSpacing.LOG:
            hz = np.geomspace(self.f_min_hz, self.f_max_hz, self.n_points)
        else:
            hz = np.linspace(self.f_min_hz, self.f_max_hz, self.n_points)
        return FrequencyGrid.from_hz(hz)


class SynthConfig(BaseModel):
    """Ground-truth system plus the grid its FRF is sampled on"""
    model_config = ConfigDict(extra="forbid")

    system: SynthSpec
    grid: GridSpec


class FitConfig(BaseModel):
    """Two-stage fit of one FRF dataset"""
    model_config = ConfigDict(extra="forbid")

    frf: str
    min_freq_hz: float = Field(default=0.0, ge=0.0)
    weighting: WeightingScheme = Field(default_factory=WeightingScheme)
    damping_model: DampingModel = DampingModel.GENERAL
    n_rbm: int = Field(default=0, ge=0)
    initialization: ModeInitialization = Field(default_factory=ModeInitialization)
    initial_zeta: float = Field(default=0.01, gt=0.0, lt=1.0)
    include_dc: bool = False
    riv: RivOptions = Field(default_factory=RivOptions)
    ipem: IpemOptions = Field(default_factory=IpemOptions)
    covariance_formula: CovarianceFormula = CovarianceFormula.SANDWICH
    output_dir: str = "fit_output"
    seed: int = Field(default=0, ge=0)


def _describe(error: PydanticValidationError) -> Dict[str, str]:
    return {".".join(str(part) for part in item["loc"]) or "<root>": item["msg"] for item in error.errors()}


def build_config(model: Type[ConfigModel], data: Dict[str, Any], source: str = "<config>") -> ConfigModel:
    """Validate a config mapping, reporting every failing field as a ConfigurationError"""
    try:
        return model.model_validate(data)
    except PydanticValidationError as e:
        fields = _describe(e)
        summary = "; ".join(f"{name}: {message}" for name, message in fields.items())
        raise ConfigurationError(f"invalid {model.__name__} in {source}: {summary}", details={"fields": fields})


def load_config_data(path: Optional[str]) -> Dict[str, Any]:
    """JSON config file as a mapping; {} when no file is given"""
    if path is None:
        return {}
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigurationError(f"config file not found: {path}", details={"path": str(path)})
    try:
        data = json.loads(config_path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ArtifactIOError(str(path), f"cannot read config: {e}")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config {path} is not valid JSON: {e}", details={"path": str(path)})
    if not isinstance(data, dict):
        raise ConfigurationError(f"config {path} must hold a JSON object", details={"path": str(path)})
    return data
