import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

DRIVE_LABELS = ("11", "12", "21", "22")


class DeviceModel(BaseModel):
    """Two microwave cavities (j) and two mechanical modes (k); all rates in Hz.

    ``g0`` holds the vacuum coupling rate for each cavity/mechanical pair,
    keyed "jk". ``cross_coupling_scale`` multiplies every off-resonant ratio
    g0_jk'/g0_jk (k' != k); 0 switches the off-resonant couplings off.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    cavity1_freq: float = Field(gt=0)
    cavity2_freq: float = Field(gt=0)
    kappa1: float = Field(gt=0)
    kappa2: float = Field(gt=0)
    eta1: float = Field(default=1.0, ge=0, le=1)
    eta2: float = Field(default=1.0, ge=0, le=1)
    mech1_freq: float = Field(gt=0)
    mech2_freq: float = Field(gt=0)
    gamma1: float = Field(gt=0)
    gamma2: float = Field(gt=0)
    g0: dict[str, float] = Field(default_factory=dict)
    n1: float = Field(default=0.0, ge=0)
    n2: float = Field(default=0.0, ge=0)
    cross_coupling_scale: float = Field(default=1.0, ge=0)

    @model_validator(mode="after")
    def check_regime(self):
        for label, rate in self.g0.items():
            if label not in DRIVE_LABELS:
                raise ValueError(f"Unknown g0 pair {label!r}; expected one of {DRIVE_LABELS}")
            if rate < 0:
                raise ValueError(f"Vacuum coupling g0[{label}] must be nonnegative, got {rate}")
        for j in (1, 2):
            for k in (1, 2):
                if self.kappa(j) >= self.mech_freq(k):
                    raise ValueError(
                        f"Resolved-sideband regime violated: kappa{j} = {self.kappa(j):g} Hz "
                        f">= mechanical frequency {self.mech_freq(k):g} Hz"
                    )
        return self

    def cavity_freq(self, j: int) -> float:
        return (self.cavity1_freq, self.cavity2_freq)[j - 1]

    def kappa(self, j: int) -> float:
        return (self.kappa1, self.kappa2)[j - 1]

    def eta(self, j: int) -> float:
        return (self.eta1, self.eta2)[j - 1]

    def mech_freq(self, k: int) -> float:
        return (self.mech1_freq, self.mech2_freq)[k - 1]

    def gamma(self, k: int) -> float:
        return (self.gamma1, self.gamma2)[k - 1]

    def occupation(self, k: int) -> float:
        return (self.n1, self.n2)[k - 1]

    def vacuum_coupling(self, j: int, k: int) -> float:
        try:
            return self.g0[f"{j}{k}"]
        except KeyError:
            raise ValueError(f"Missing vacuum coupling rate g0 for cavity {j} / mechanical mode {k}")

    def coupling_ratio(self, j: int, k: int, k_other: int) -> float:
        """g0_jk'/g0_jk: how strongly a tone pumped for (j, k) couples mechanical mode k'."""
        if k_other == k:
            return 1.0
        if self.cross_coupling_scale == 0:
            return 0.0
        pumped = self.vacuum_coupling(j, k)
        if pumped == 0:
            raise ValueError(f"g0[{j}{k}] is zero; a tone pumped for this pair cannot be scaled")
        return self.cross_coupling_scale * self.vacuum_coupling(j, k_other) / pumped


class DriveTone(BaseModel):
    """A red-sideband tone between cavity j and mechanical mode k; frequency and coupling in Hz."""

    model_config = ConfigDict(frozen=True)

    cavity: int = Field(ge=1, le=2)
    mechanical: int = Field(ge=1, le=2)
    frequency: float
    coupling: float = Field(ge=0)
    phase: float = 0.0

    @property
    def label(self) -> str:
        return f"{self.cavity}{self.mechanical}"


class ToneSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    cavity: int = Field(ge=1, le=2)
    mechanical: int = Field(ge=1, le=2)
    cooperativity: Optional[float] = Field(default=None, ge=0)
    coupling_hz: Optional[float] = Field(default=None, ge=0)
    phase_deg: float = 0.0

    @model_validator(mode="after")
    def one_strength(self):
        if (self.cooperativity is None) == (self.coupling_hz is None):
            raise ValueError(
                f"Tone ({self.cavity},{self.mechanical}) needs exactly one of cooperativity or coupling_hz"
            )
        return self

    @property
    def label(self) -> str:
        return f"{self.cavity}{self.mechanical}"


class DriveSettings(BaseModel):
    """The four isolator tones plus the drive detuning of each mechanical mode (Hz).

    Tone (j, k) sits at ω_j - Ω_k - δ_k so every loop closes on itself.
    """

    model_config = ConfigDict(extra="forbid")

    tones: list[ToneSettings]
    detunings_hz: tuple[float, float] = (0.0, 0.0)

    @model_validator(mode="after")
    def four_tones(self):
        labels = sorted(tone.label for tone in self.tones)
        if labels != list(DRIVE_LABELS):
            raise ValueError(f"Expected exactly one tone per cavity/mechanical pair {DRIVE_LABELS}, got {labels}")
        return self

    def tone(self, label: str) -> ToneSettings:
        for tone in self.tones:
            if tone.label == label:
                return tone
        raise ValueError(f"No drive tone {label!r}")

    @property
    def loop_phase(self) -> float:
        """φ = θ12 - θ11 + θ21 - θ22 in radians."""
        theta = {tone.label: np.radians(tone.phase_deg) for tone in self.tones}
        return float(theta["12"] - theta["11"] + theta["21"] - theta["22"])

    def drive_tones(self, device: DeviceModel) -> list[DriveTone]:
        drives = []
        for label in DRIVE_LABELS:
            tone = self.tone(label)
            j, k = tone.cavity, tone.mechanical
            if tone.coupling_hz is not None:
                coupling = tone.coupling_hz
            else:
                coupling = 0.5 * np.sqrt(tone.cooperativity * device.kappa(j) * device.gamma(k))
            drives.append(
                DriveTone(
                    cavity=j,
                    mechanical=k,
                    frequency=device.cavity_freq(j) - device.mech_freq(k) - self.detunings_hz[k - 1],
                    coupling=float(coupling),
                    phase=float(np.radians(tone.phase_deg)),
                )
            )
        return drives
