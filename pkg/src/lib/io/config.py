import json
import logging
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ...exceptions import ConfigError
from ..expansion import ModelKind, ScatteringModel
from ..expansion.device import DeviceModel, DriveSettings
from ..fit.problem import FreeParameter
from ..noise.chain import AmplifierChain, PortChain
from .tables import OutputFormat

logger = logging.getLogger(__name__)


class SectionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelConfig(SectionConfig):
    kind: ModelKind = ModelKind.EXPANDED
    depth: int = Field(default=1, ge=1)
    convergence_depths: list[int] = Field(default_factory=list)


class IsolatorConfig(SectionConfig):
    C3: float = Field(gt=0)
    C4: float = Field(gt=0)
    eta1: float = Field(default=1.0, ge=0, le=1)
    eta2: float = Field(default=1.0, ge=0, le=1)
    gamma3_hz: Optional[float] = Field(default=None, gt=0)
    gamma4_hz: Optional[float] = Field(default=None, gt=0)
    edge_cooperativities: Optional[tuple[float, float, float, float]] = None


class SweepConfig(SectionConfig):
    """Offset grid (explicit list or start/stop/points) and loop phases in degrees."""

    offsets_hz: Optional[list[float]] = None
    offset_start_hz: float = 0.0
    offset_stop_hz: float = 0.0
    offset_points: int = Field(default=1, ge=1)
    phases_deg: Optional[list[float]] = None
    phase_start_deg: Optional[float] = None
    phase_stop_deg: Optional[float] = None
    phase_points: int = Field(default=1, ge=1)
    ports: list[tuple[str, str]] = Field(default_factory=lambda: [("cavity2", "cavity1"), ("cavity1", "cavity2")])

    @model_validator(mode="after")
    def one_phase_grid(self):
        if self.phases_deg is not None and self.phase_start_deg is not None:
            raise ValueError("Give either phases_deg or phase_start_deg/phase_stop_deg, not both")
        return self

    def offsets(self) -> np.ndarray:
        if self.offsets_hz is not None:
            return np.asarray(self.offsets_hz, dtype=float)
        return np.linspace(self.offset_start_hz, self.offset_stop_hz, self.offset_points)

    def phases(self, default: float) -> np.ndarray:
        """Loop phases in radians; ``default`` (radians) when no grid is configured."""
        if self.phases_deg is not None:
            return np.radians(self.phases_deg)
        if self.phase_start_deg is not None:
            stop = self.phase_stop_deg if self.phase_stop_deg is not None else self.phase_start_deg
            return np.radians(np.linspace(self.phase_start_deg, stop, self.phase_points))
        return np.array([default])


class NoiseConfig(SectionConfig):
    chain: dict[str, PortChain] = Field(default_factory=dict)
    ports: list[str] = Field(default_factory=lambda: ["cavity1", "cavity2"])

    def amplifier_chain(self) -> AmplifierChain:
        return AmplifierChain(ports=self.chain)


class FitConfig(SectionConfig):
    data: Optional[str] = None
    kind: Literal["scattering", "noise"] = "scattering"
    free: list[FreeParameter] = Field(default_factory=list)
    restarts: int = Field(default=0, ge=0)
    baths: list[str] = Field(default_factory=lambda: ["mech1", "mech2"])
    fit_added_noise: bool = False


class OutputConfig(SectionConfig):
    format: OutputFormat = OutputFormat.CSV
    path: Optional[str] = None
    precision: int = Field(default=10, ge=1, le=17)


class RunConfig(SectionConfig):
    device: Optional[DeviceModel] = None
    drives: Optional[DriveSettings] = None
    model: ModelConfig = Field(default_factory=ModelConfig)
    isolator: Optional[IsolatorConfig] = None
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    fit: FitConfig = Field(default_factory=FitConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    def scattering_model(self) -> ScatteringModel:
        if self.device is None:
            raise ConfigError("Config has no device section")
        if self.drives is None:
            raise ConfigError("Config has no drives section")
        return ScatteringModel(device=self.device, drives=self.drives, kind=self.model.kind, depth=self.model.depth)

    def resolved(self) -> dict:
        return self.model_dump(mode="json")


def load_config(path: Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}")
    try:
        raw = json.loads(text) if Path(path).suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"Cannot parse config {path}: {e}")
    if not isinstance(raw, dict):
        raise ConfigError(f"Config {path} must be a mapping of sections")
    config = RunConfig.model_validate(raw)
    logger.info(f"Loaded config {path} with sections {sorted(raw)}")
    return config
