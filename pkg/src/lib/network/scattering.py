import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from ...exceptions import SingularMatrixError
from ...globals import COND_LIMIT, COND_WARN, DEFAULT_THREADS
from .modes import ModeNetwork

logger = logging.getLogger(__name__)

POWER_FLOOR = 1e-30

PortPair = tuple[str, str]


def assemble_M(network: ModeNetwork, probe_offset: float = 0.0, loop_phase: Optional[float] = None) -> np.ndarray:
    """Mode-coupling matrix at one probe offset (Hz).

    M_jj = (signal_j + offset - resonance_j) / linewidth_j + i/2, M_jk = β_jk
    with the loop phase applied to the phase-bearing drive.
    """
    arrays = network.arrays
    phase = network.loop_phase if loop_phase is None else loop_phase
    M = arrays.base * np.exp(1j * phase * arrays.phase_sign)
    M[np.diag_indices_from(M)] = arrays.detuning + probe_offset * arrays.inv_linewidth + 0.5j
    return M


def assemble_M_batch(
    network: ModeNetwork, offsets: Sequence[float], loop_phase: Optional[float] = None
) -> np.ndarray:
    arrays = network.arrays
    offsets = np.asarray(offsets, dtype=float)
    M0 = assemble_M(network, 0.0, loop_phase)
    stack = np.repeat(M0[np.newaxis, :, :], offsets.size, axis=0)
    diag = np.arange(network.size)
    stack[:, diag, diag] += offsets[:, np.newaxis] * arrays.inv_linewidth[np.newaxis, :]
    return stack


def check_condition(M: np.ndarray, probe_offset: float) -> float:
    condition = float(np.linalg.cond(M))
    if not np.isfinite(condition) or condition > COND_LIMIT:
        raise SingularMatrixError(probe_offset, condition)
    if condition > COND_WARN:
        logger.warning(f"Ill-conditioned mode-coupling matrix at {probe_offset:.6g} Hz: cond = {condition:.3e}")
    return condition


def scattering(network: ModeNetwork, probe_offset: float = 0.0, loop_phase: Optional[float] = None) -> np.ndarray:
    """S = i H M^-1 H - 1 with H = diag(sqrt(eta)), via LU factorization and per-column solves."""
    M = assemble_M(network, probe_offset, loop_phase)
    return solve_scattering(M, network.arrays.sqrt_eta, probe_offset)


def solve_scattering(M: np.ndarray, sqrt_eta: np.ndarray, probe_offset: float = 0.0) -> np.ndarray:
    check_condition(M, probe_offset)
    factors = lu_factor(M)
    X = lu_solve(factors, np.diag(sqrt_eta).astype(complex))
    return 1j * sqrt_eta[:, np.newaxis] * X - np.eye(M.shape[0])


def scattering_batch(
    network: ModeNetwork, offsets: Sequence[float], loop_phase: Optional[float] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Scattering matrices for a stack of offsets.

    Returns (S, flags): S has shape (K, N, N); points whose matrix is too
    ill-conditioned to solve are NaN and flagged instead of raising.
    """
    offsets = np.asarray(offsets, dtype=float)
    stack = assemble_M_batch(network, offsets, loop_phase)
    conditions = np.linalg.cond(stack)
    flags = ~np.isfinite(conditions) | (conditions > COND_LIMIT)
    noisy = ~flags & (conditions > COND_WARN)
    if noisy.any():
        logger.warning(f"{int(noisy.sum())} probe offsets have condition number above {COND_WARN:.1e}")

    n = network.size
    sqrt_eta = network.arrays.sqrt_eta
    S = np.full(stack.shape, np.nan + 1j * np.nan)
    good = ~flags
    if good.any():
        rhs = np.broadcast_to(np.diag(sqrt_eta).astype(complex), stack[good].shape)
        X = np.linalg.solve(stack[good], rhs)
        S[good] = 1j * sqrt_eta[np.newaxis, :, np.newaxis] * X - np.eye(n)
    return S, flags


def to_db(power) -> np.ndarray:
    return 10.0 * np.log10(np.maximum(np.asarray(power, dtype=float), POWER_FLOOR))


def insertion_loss_db(S: np.ndarray, port_out: int, port_in: int) -> float:
    """Forward transmission deficit, -10 log10 |S_out,in|^2."""
    return float(-to_db(abs(S[port_out, port_in]) ** 2))


def isolation_db(S: np.ndarray, port_out: int, port_in: int) -> float:
    """Backward suppression; pass the reverse direction's ports."""
    return float(-to_db(abs(S[port_out, port_in]) ** 2))


@dataclass(frozen=True)
class SweepResult:
    offsets: np.ndarray
    phases: np.ndarray
    ports: tuple[PortPair, ...]
    power: np.ndarray
    flags: np.ndarray
    s: Optional[np.ndarray] = field(default=None)

    def power_for(self, port_out: str, port_in: str) -> np.ndarray:
        """|S_out,in|^2 with shape (phases, offsets)."""
        try:
            q = self.ports.index((port_out, port_in))
        except ValueError:
            raise ValueError(f"Port pair ({port_out}, {port_in}) was not swept; available: {list(self.ports)}")
        return self.power[:, :, q]

    def rows(self) -> Iterator[dict]:
        for p, phase in enumerate(self.phases):
            for k, offset in enumerate(self.offsets):
                for q, (port_out, port_in) in enumerate(self.ports):
                    value = float(self.power[p, k, q])
                    yield {
                        "offset_hz": float(offset),
                        "phase_deg": float(np.degrees(phase)),
                        "port_out": port_out,
                        "port_in": port_in,
                        "value": value,
                        "value_db": float(to_db(value)) if np.isfinite(value) else float("nan"),
                        "flag": int(self.flags[p, k]),
                    }


def resolve_ports(network: ModeNetwork, ports: Optional[Sequence[PortPair]]) -> tuple[PortPair, ...]:
    if ports is None:
        return tuple((a, b) for a in network.mode_ids for b in network.mode_ids)
    for port_out, port_in in ports:
        network.index(port_out)
        network.index(port_in)
    return tuple((str(a), str(b)) for a, b in ports)


def sweep_scattering(
    network: ModeNetwork,
    offsets: Sequence[float],
    phases: Sequence[float],
    ports: Optional[Sequence[PortPair]] = None,
    keep_complex: bool = False,
    threads: int = DEFAULT_THREADS,
) -> SweepResult:
    """|S|^2 over an (offset, loop phase) grid; phases in radians.

    Grid points that cannot be solved are recorded as NaN with a flag.
    """
    offsets = np.asarray(offsets, dtype=float)
    phases = np.asarray(phases, dtype=float)
    if offsets.size == 0 or phases.size == 0:
        raise ValueError("Sweep grids must be nonempty")

    pairs = resolve_ports(network, ports)
    rows = np.array([network.index(a) for a, _ in pairs])
    cols = np.array([network.index(b) for _, b in pairs])

    def evaluate(phase: float) -> tuple[np.ndarray, np.ndarray]:
        S, flags = scattering_batch(network, offsets, phase)
        return S[:, rows, cols], flags

    if threads > 1 and phases.size > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            results = list(executor.map(evaluate, phases))
    else:
        results = [evaluate(phase) for phase in phases]

    selected = np.stack([r[0] for r in results])
    flags = np.stack([r[1] for r in results])
    if flags.any():
        logger.warning(f"{int(flags.sum())} of {flags.size} grid points could not be solved and are NaN")

    logger.info(
        f"Swept {network.size}-mode network over {offsets.size} offsets x {phases.size} phases "
        f"for {len(pairs)} port pairs"
    )
    return SweepResult(
        offsets=offsets,
        phases=phases,
        ports=pairs,
        power=np.abs(selected) ** 2,
        flags=flags,
        s=selected if keep_complex else None,
    )
