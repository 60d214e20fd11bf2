import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)


class Mode(BaseModel):
    """One resonance evaluated at one signal frequency. All frequencies are ordinary (Hz)."""

    model_config = ConfigDict(frozen=True)

    id: str
    oscillator: str
    resonance_freq: float
    linewidth: float = Field(gt=0)
    coupling_efficiency: float = Field(default=1.0, ge=0, le=1)
    signal_freq: float
    bath_occupation: float = Field(default=0.0, ge=0)

    @model_validator(mode="before")
    @classmethod
    def default_signal_freq(cls, data):
        if isinstance(data, dict) and data.get("signal_freq") is None and "resonance_freq" in data:
            data = {**data, "signal_freq": data["resonance_freq"]}
        return data


class Coupling(BaseModel):
    """Beam-splitter coupling between two modes, stored as |β| and arg β.

    β is real (phase 0 or π); the network's loop phase is the only complex
    phase and lands on the mode_a row of the phase-bearing coupling.
    """

    model_config = ConfigDict(frozen=True)

    mode_a: str
    mode_b: str
    magnitude: float = Field(ge=0)
    phase: float = 0.0
    drive: Optional[str] = None

    @model_validator(mode="after")
    def check_coupling(self):
        if self.mode_a == self.mode_b:
            raise ValueError(f"Coupling must join two different modes, got {self.mode_a!r} twice")
        if abs(np.sin(self.phase)) > 1e-12:
            raise ValueError(
                f"Coupling {self.mode_a!r}-{self.mode_b!r} has phase {self.phase:.6g} rad; couplings must be real "
                "and the loop phase carries the only complex phase"
            )
        return self

    @property
    def beta(self) -> float:
        return -self.magnitude if np.cos(self.phase) < 0 else self.magnitude

    @property
    def pair(self) -> frozenset[str]:
        return frozenset((self.mode_a, self.mode_b))


@dataclass(frozen=True)
class NetworkArrays:
    detuning: np.ndarray
    inv_linewidth: np.ndarray
    base: np.ndarray
    phase_sign: np.ndarray
    sqrt_eta: np.ndarray
    bath: np.ndarray


class ModeNetwork(BaseModel):
    """Coupled-mode network: ordered modes, couplings and the loop phase.

    The loop phase multiplies every coupling produced by ``phase_drive``
    (e^{+iφ} on the mode_a row). All other coupling phases stay as stored.
    """

    model_config = ConfigDict(frozen=True)

    modes: tuple[Mode, ...]
    couplings: tuple[Coupling, ...] = ()
    loop_phase: float = 0.0
    phase_drive: Optional[str] = "12"

    @model_validator(mode="after")
    def check_graph(self):
        if not self.modes:
            raise ValueError("A network needs at least one mode")

        ids = [mode.id for mode in self.modes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"Duplicate mode ids in {ids}")

        oscillators: dict[str, Mode] = {}
        for mode in self.modes:
            first = oscillators.setdefault(mode.oscillator, mode)
            if not (
                np.isclose(first.resonance_freq, mode.resonance_freq, rtol=1e-12, atol=0.0)
                and np.isclose(first.linewidth, mode.linewidth, rtol=1e-12, atol=0.0)
            ):
                raise ValueError(
                    f"Modes {first.id!r} and {mode.id!r} share oscillator {mode.oscillator!r} "
                    "but differ in resonance frequency or linewidth"
                )

        known = set(ids)
        seen: set[frozenset[str]] = set()
        for coupling in self.couplings:
            for label in (coupling.mode_a, coupling.mode_b):
                if label not in known:
                    raise ValueError(f"Coupling refers to unknown mode label {label!r}")
            if coupling.pair in seen:
                raise ValueError(f"More than one coupling between {coupling.mode_a!r} and {coupling.mode_b!r}")
            seen.add(coupling.pair)

        if len(self.modes) > 1 and not nx.is_connected(self.graph()):
            logger.warning(
                f"Network with {len(self.modes)} modes is disconnected "
                f"({nx.number_connected_components(self.graph())} components)"
            )
        return self

    @property
    def size(self) -> int:
        return len(self.modes)

    @property
    def mode_ids(self) -> list[str]:
        return [mode.id for mode in self.modes]

    def index(self, mode_id: str) -> int:
        try:
            return self.mode_ids.index(mode_id)
        except ValueError:
            raise ValueError(f"Unknown mode label {mode_id!r}; network modes are {self.mode_ids}")

    def mode(self, mode_id: str) -> Mode:
        return self.modes[self.index(mode_id)]

    def graph(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(self.mode_ids)
        graph.add_edges_from((c.mode_a, c.mode_b, {"drive": c.drive}) for c in self.couplings)
        return graph

    def with_loop_phase(self, loop_phase: float) -> "ModeNetwork":
        # The copy shares the cached arrays, which hold no loop phase
        return self.model_copy(update={"loop_phase": float(loop_phase)})

    @cached_property
    def arrays(self) -> NetworkArrays:
        n = self.size
        index = {mode_id: i for i, mode_id in enumerate(self.mode_ids)}
        base = np.zeros((n, n), dtype=complex)
        phase_sign = np.zeros((n, n))
        for coupling in self.couplings:
            a, b = index[coupling.mode_a], index[coupling.mode_b]
            base[a, b] = coupling.beta
            base[b, a] = coupling.beta
            if self.phase_drive is not None and coupling.drive == self.phase_drive:
                phase_sign[a, b] = 1.0
                phase_sign[b, a] = -1.0

        return NetworkArrays(
            detuning=np.array([(m.signal_freq - m.resonance_freq) / m.linewidth for m in self.modes]),
            inv_linewidth=np.array([1.0 / m.linewidth for m in self.modes]),
            base=base,
            phase_sign=phase_sign,
            sqrt_eta=np.sqrt([m.coupling_efficiency for m in self.modes]),
            bath=np.array([m.bath_occupation for m in self.modes]),
        )
