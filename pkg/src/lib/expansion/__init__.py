from enum import Enum
from typing import Callable, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..network.modes import ModeNetwork
from .device import DeviceModel, DriveSettings, DriveTone
from .expanded import build_expanded_network, build_principal_network


class ModelKind(Enum):
    EXPANDED = "expanded"
    EFFECTIVE = "effective"


network_builders: dict[ModelKind, Callable[[DeviceModel, list[DriveTone], int], ModeNetwork]] = {
    ModelKind.EXPANDED: build_expanded_network,
    ModelKind.EFFECTIVE: lambda device, drives, depth: build_principal_network(device, drives),
}


class ScatteringModel(BaseModel):
    """Device, tones and network construction rule; the forward model of every command.

    Parameters are addressed by name: ``drive.<jk>.cooperativity``,
    ``drive.<jk>.coupling`` (Hz), ``detuning.<k>`` (Hz) and ``device.<field>``.
    """

    model_config = ConfigDict(frozen=True)

    device: DeviceModel
    drives: DriveSettings
    kind: ModelKind = ModelKind.EXPANDED
    depth: int = Field(default=1, ge=1)

    def network(self, loop_phase: Optional[float] = None) -> ModeNetwork:
        builder = network_builders[self.kind]
        network = builder(self.device, self.drives.drive_tones(self.device), self.depth)
        if loop_phase is not None:
            network = network.with_loop_phase(loop_phase)
        return network

    def value(self, name: str) -> float:
        area, _, rest = name.partition(".")
        if area == "drive":
            label, _, attribute = rest.partition(".")
            tone = self.drives.tone(label)
            field = {"cooperativity": "cooperativity", "coupling": "coupling_hz"}.get(attribute)
            value = getattr(tone, field) if field else None
            if value is None:
                raise ValueError(f"Parameter {name!r} is not set on tone {label}")
            return float(value)
        if area == "detuning":
            return float(self.drives.detunings_hz[self._mechanical_index(name, rest)])
        if area == "device":
            if rest.startswith("g0."):
                return float(self.device.vacuum_coupling(int(rest[3]), int(rest[4])))
            if rest not in DeviceModel.model_fields or rest == "g0":
                raise ValueError(f"Unknown device parameter {name!r}")
            return float(getattr(self.device, rest))
        raise ValueError(f"Unknown parameter {name!r}")

    def with_values(self, values: dict[str, float]) -> "ScatteringModel":
        device_updates: dict = {}
        g0 = dict(self.device.g0)
        tones = {tone.label: tone for tone in self.drives.tones}
        detunings = list(self.drives.detunings_hz)

        for name, value in values.items():
            area, _, rest = name.partition(".")
            if area == "drive":
                label, _, attribute = rest.partition(".")
                if label not in tones or attribute not in ("cooperativity", "coupling"):
                    raise ValueError(f"Unknown drive parameter {name!r}")
                if attribute == "cooperativity":
                    tones[label] = tones[label].model_copy(update={"cooperativity": value, "coupling_hz": None})
                else:
                    tones[label] = tones[label].model_copy(update={"coupling_hz": value, "cooperativity": None})
            elif area == "detuning":
                detunings[self._mechanical_index(name, rest)] = value
            elif area == "device" and rest.startswith("g0."):
                g0[rest[3:]] = value
            elif area == "device" and rest in DeviceModel.model_fields and rest != "g0":
                device_updates[rest] = value
            else:
                raise ValueError(f"Unknown parameter {name!r}")

        device_updates["g0"] = g0
        drives = self.drives.model_copy(
            update={"tones": [tones[tone.label] for tone in self.drives.tones], "detunings_hz": tuple(detunings)}
        )
        return self.model_copy(update={"device": self.device.model_copy(update=device_updates), "drives": drives})

    @staticmethod
    def _mechanical_index(name: str, rest: str) -> int:
        if rest not in ("1", "2"):
            raise ValueError(f"Unknown detuning parameter {name!r}; use detuning.1 or detuning.2")
        return int(rest) - 1
