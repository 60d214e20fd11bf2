import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from ...globals import DEFAULT_THREADS
from ..network.modes import ModeNetwork
from ..network.scattering import scattering_batch
from .chain import AmplifierChain, chain_referred_power

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseSpectrum:
    port: str
    offsets: np.ndarray
    quanta: np.ndarray
    power: np.ndarray
    flags: np.ndarray


@dataclass(frozen=True)
class NoiseMap:
    offsets: np.ndarray
    phases: np.ndarray
    ports: tuple[str, ...]
    quanta: np.ndarray
    power: np.ndarray
    flags: np.ndarray

    def quanta_for(self, port: str) -> np.ndarray:
        return self.quanta[:, :, self.ports.index(port)]

    def rows(self) -> Iterator[dict]:
        for p, phase in enumerate(self.phases):
            for k, offset in enumerate(self.offsets):
                for q, port in enumerate(self.ports):
                    yield {
                        "offset_hz": float(offset),
                        "phase_deg": float(np.degrees(phase)),
                        "port_out": port,
                        "port_in": "",
                        "value": float(self.quanta[p, k, q]),
                        "power_w_hz": float(self.power[p, k, q]),
                        "flag": int(self.flags[p, k]),
                    }


def _port_quanta(
    network: ModeNetwork, ports: Sequence[str], offsets: np.ndarray, loop_phase: Optional[float]
) -> tuple[np.ndarray, np.ndarray]:
    rows = [network.index(port) for port in ports]
    S, flags = scattering_batch(network, offsets, loop_phase)
    weights = np.abs(S[:, rows, :]) ** 2
    return weights @ network.arrays.bath, flags


def output_noise(
    network: ModeNetwork,
    chain: AmplifierChain,
    port: str,
    offsets: Sequence[float],
    loop_phase: Optional[float] = None,
) -> NoiseSpectrum:
    """Output noise of one port: Σ_k |S_jk|² n_k quanta, and the chain-referred density."""
    offsets = np.asarray(offsets, dtype=float)
    quanta, flags = _port_quanta(network, [port], offsets, loop_phase)
    quanta = quanta[:, 0]
    signal = network.mode(port).signal_freq + offsets
    return NoiseSpectrum(
        port=port,
        offsets=offsets,
        quanta=quanta,
        power=chain_referred_power(quanta, signal, chain.port(port)),
        flags=flags,
    )


def noise_map(
    network: ModeNetwork,
    chain: AmplifierChain,
    ports: Sequence[str],
    offsets: Sequence[float],
    phases: Sequence[float],
    threads: int = DEFAULT_THREADS,
) -> NoiseMap:
    offsets = np.asarray(offsets, dtype=float)
    phases = np.asarray(phases, dtype=float)
    if offsets.size == 0 or phases.size == 0 or not ports:
        raise ValueError("Noise maps need nonempty offset, phase and port lists")
    ports = tuple(ports)
    for port in ports:
        network.index(port)

    def evaluate(phase: float) -> tuple[np.ndarray, np.ndarray]:
        return _port_quanta(network, ports, offsets, phase)

    if threads > 1 and phases.size > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            results = list(executor.map(evaluate, phases))
    else:
        results = [evaluate(phase) for phase in phases]

    quanta = np.stack([r[0] for r in results])
    flags = np.stack([r[1] for r in results])
    if flags.any():
        logger.warning(f"{int(flags.sum())} noise-map points could not be solved and are NaN")

    power = np.empty_like(quanta)
    for q, port in enumerate(ports):
        signal = network.mode(port).signal_freq + offsets
        power[:, :, q] = chain_referred_power(quanta[:, :, q], signal[np.newaxis, :], chain.port(port))
    return NoiseMap(offsets=offsets, phases=phases, ports=ports, quanta=quanta, power=power, flags=flags)
