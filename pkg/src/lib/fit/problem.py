from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ...exceptions import FitError
from ..expansion import ScatteringModel
from ..expansion.reduction import EffectiveParameters
from ..network.scattering import SweepResult, sweep_scattering
from ..noise.chain import AmplifierChain
from ..noise.spectra import NoiseMap


class ObservedMap:
    """Flat list of observations; phases in radians, values linear (|S|² or quanta)."""

    def __init__(
        self,
        offsets: Sequence[float],
        phases: Sequence[float],
        port_out: Sequence[str],
        port_in: Sequence[str],
        values: Sequence[float],
        sigma: Optional[Sequence[float]] = None,
    ) -> None:
        self.offsets = np.asarray(offsets, dtype=float)
        self.phases = np.asarray(phases, dtype=float)
        self.port_out = np.asarray(port_out, dtype=str)
        self.port_in = np.asarray(port_in, dtype=str)
        self.values = np.asarray(values, dtype=float)
        self.sigma = None if sigma is None else np.asarray(sigma, dtype=float)
        sizes = {len(self.offsets), len(self.phases), len(self.port_out), len(self.port_in), len(self.values)}
        if self.sigma is not None:
            sizes.add(len(self.sigma))
        if len(sizes) != 1:
            raise ValueError(f"Observation columns have mismatched lengths {sorted(sizes)}")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def weights(self) -> np.ndarray:
        if self.sigma is None:
            return np.ones(len(self))
        return 1.0 / np.asarray(self.sigma, dtype=float)

    def phase_groups(self) -> list[tuple[float, np.ndarray]]:
        """(phase, indices) for every distinct loop phase."""
        rounded = np.round(self.phases, 12)
        return [(float(phase), np.flatnonzero(rounded == phase)) for phase in np.unique(rounded)]

    @classmethod
    def from_sweep(cls, sweep: SweepResult) -> "ObservedMap":
        rows = [row for row in sweep.rows() if not row["flag"]]
        return cls(
            offsets=np.array([r["offset_hz"] for r in rows]),
            phases=np.radians([r["phase_deg"] for r in rows]),
            port_out=np.array([r["port_out"] for r in rows]),
            port_in=np.array([r["port_in"] for r in rows]),
            values=np.array([r["value"] for r in rows]),
        )

    @classmethod
    def from_noise_map(cls, noise: NoiseMap, added_noise: Optional[dict[str, float]] = None) -> "ObservedMap":
        """Quanta referred to the chain input, n_amp + Σ|S|²n, per port."""
        added_noise = added_noise or {}
        rows = [row for row in noise.rows() if not row["flag"]]
        return cls(
            offsets=np.array([r["offset_hz"] for r in rows]),
            phases=np.radians([r["phase_deg"] for r in rows]),
            port_out=np.array([r["port_out"] for r in rows]),
            port_in=np.array(["" for _ in rows]),
            values=np.array([r["value"] + added_noise.get(r["port_out"], 0.0) for r in rows]),
        )


def synthetic_map(
    model: ScatteringModel,
    offsets: Sequence[float],
    phases: Sequence[float],
    ports: Sequence[tuple[str, str]],
    noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> ObservedMap:
    """|S|² map generated by the model, with optional multiplicative Gaussian noise."""
    network = model.network()
    observed = ObservedMap.from_sweep(sweep_scattering(network, offsets, phases, ports))
    if noise > 0:
        rng = rng or np.random.default_rng()
        values = observed.values * (1.0 + noise * rng.standard_normal(len(observed)))
        observed = ObservedMap(observed.offsets, observed.phases, observed.port_out, observed.port_in, values)
    return observed


class FreeParameter(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    initial: Optional[float] = None
    lower: float = -np.inf
    upper: float = np.inf

    @model_validator(mode="after")
    def ordered_bounds(self):
        if not self.lower < self.upper:
            raise ValueError(f"Bounds of {self.name} must satisfy lower < upper, got ({self.lower}, {self.upper})")
        return self


class FitProblem(BaseModel):
    """Nonlinear |S|² fit: observations, forward model and the free parameters."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    data: ObservedMap
    model: ScatteringModel
    free: list[FreeParameter]

    @model_validator(mode="after")
    def well_posed(self):
        if not self.free:
            raise FitError("A fit needs at least one free parameter")
        if len(self.data) < len(self.free):
            raise FitError(
                f"Underdetermined fit: {len(self.data)} observations for {len(self.free)} free parameters"
            )
        for parameter, initial in zip(self.free, self.initial_values()):
            if not parameter.lower <= initial <= parameter.upper:
                raise FitError(
                    f"Initial value {initial:g} of {parameter.name} lies outside its bounds "
                    f"[{parameter.lower:g}, {parameter.upper:g}]"
                )
        return self

    @property
    def names(self) -> list[str]:
        return [parameter.name for parameter in self.free]

    def initial_values(self) -> np.ndarray:
        return np.array(
            [p.initial if p.initial is not None else self.model.value(p.name) for p in self.free], dtype=float
        )


class NoiseFitProblem(BaseModel):
    """Linear noise fit: bath occupations (and optionally added noise per port) are free.

    Observed values are quanta referred to the chain input, n_amp + Σ_k |S_jk|² n_k.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    data: ObservedMap
    chain: AmplifierChain = Field(default_factory=AmplifierChain)
    baths: list[str] = Field(default_factory=lambda: ["mech1", "mech2"])
    fit_added_noise: bool = False

    @model_validator(mode="after")
    def well_posed(self):
        columns = len(self.baths) + (len(set(self.data.port_out)) if self.fit_added_noise else 0)
        if len(self.data) < columns:
            raise FitError(f"Underdetermined noise fit: {len(self.data)} observations for {columns} unknowns")
        return self


class FitReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    parameters: dict[str, float]
    standard_errors: dict[str, float]
    residual_norm: float
    initial_residual_norm: float
    nfev: int = 0
    status: int = 1
    message: str = ""
    rank_deficient: bool = False
    null_space: list[dict[str, float]] = Field(default_factory=list)
    restarts: int = 0
    effective: Optional[EffectiveParameters] = None
    model: Optional[ScatteringModel] = Field(default=None, exclude=True)
