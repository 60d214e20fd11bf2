import logging
from typing import Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from ...exceptions import PivotError
from ...globals import PIVOT_TOL
from ..network.modes import ModeNetwork
from ..network.scattering import assemble_M, solve_scattering
from .device import DRIVE_LABELS, DeviceModel, DriveSettings, DriveTone
from .expanded import PRINCIPAL_IDS, build_expanded_network

logger = logging.getLogger(__name__)


def reduce_mode(M: np.ndarray, k: int, tol: float = PIVOT_TOL) -> np.ndarray:
    """Eliminate mode k: M'_ij = M_ij - M_ik M_kj / M_kk, then drop row and column k."""
    pivot = M[k, k]
    if abs(pivot) < tol:
        raise PivotError(k, pivot)
    reduced = M - np.outer(M[:, k], M[k, :]) / pivot
    keep = np.arange(M.shape[0]) != k
    return reduced[np.ix_(keep, keep)]


def reduce_modes(M: np.ndarray, indices: Sequence[int], tol: float = PIVOT_TOL) -> np.ndarray:
    """Eliminate several modes; indices refer to the original matrix."""
    reduced = M
    for k in sorted(set(indices), reverse=True):
        reduced = reduce_mode(reduced, k, tol)
    return reduced


def correction_size(M: np.ndarray, k: int) -> float:
    """Largest |M_ik M_kj / M_kk| over the retained entries."""
    keep = np.arange(M.shape[0]) != k
    correction = np.outer(M[keep, k], M[k, keep]) / M[k, k]
    return float(np.max(np.abs(correction))) if correction.size else 0.0


def reduced_scattering(
    network: ModeNetwork,
    retained: Optional[Sequence[str]] = None,
    probe_offset: float = 0.0,
    loop_phase: Optional[float] = None,
) -> np.ndarray:
    """Scattering among retained modes computed from the Schur-reduced matrix.

    Exact for the retained block when the eliminated modes receive no input.
    """
    retained = list(retained) if retained is not None else [m for m in network.mode_ids if m in PRINCIPAL_IDS]
    keep = [network.index(mode_id) for mode_id in retained]
    drop = [i for i in range(network.size) if i not in keep]
    M = assemble_M(network, probe_offset, loop_phase)
    order = sorted(keep)
    reduced = reduce_modes(M, drop)
    sqrt_eta = network.arrays.sqrt_eta[order]
    S = solve_scattering(reduced, sqrt_eta, probe_offset)
    position = [order.index(i) for i in keep]
    return S[np.ix_(position, position)]


class EffectiveParameters(BaseModel):
    """Four-mode parameters after eliminating the off-resonant modes."""

    gamma_eff: tuple[float, float]
    cooperativities: dict[str, float]
    n_eff: tuple[float, float]
    kappa_eff: tuple[float, float]
    frequency_pull: tuple[float, float]
    rotating_wave: dict[str, float]
    mode_count: int
    coupling_count: int


def effective_occupation(gamma: float, n: float, gamma_eff: float) -> float:
    return gamma * n / gamma_eff


def effective_from_network(
    network: ModeNetwork,
    probe_offset: float = 0.0,
    diagnostic_offsets: Optional[Sequence[float]] = None,
) -> EffectiveParameters:
    principal = [network.index(mode_id) for mode_id in PRINCIPAL_IDS]
    auxiliary = [i for i in range(network.size) if i not in principal]

    M = assemble_M(network, probe_offset)
    reduced = reduce_modes(M, auxiliary)
    order = sorted(principal)
    cav1, cav2, mech1, mech2 = (order.index(network.index(mode_id)) for mode_id in PRINCIPAL_IDS)

    modes = {mode_id: network.mode(mode_id) for mode_id in PRINCIPAL_IDS}
    scale = 2.0 * np.imag(np.diag(reduced))

    gamma_eff = tuple(float(scale[i] * modes[m].linewidth) for i, m in ((mech1, "mech1"), (mech2, "mech2")))
    kappa_eff = tuple(float(scale[i] * modes[m].linewidth) for i, m in ((cav1, "cavity1"), (cav2, "cavity2")))
    pull = tuple(
        float(np.real(reduced[i, i] - M[i, i]) * modes[m].linewidth) for i, m in ((mech1, "mech1"), (mech2, "mech2"))
    )
    cooperativities = {}
    for label in DRIVE_LABELS:
        j, k = (cav1, cav2)[int(label[0]) - 1], (mech1, mech2)[int(label[1]) - 1]
        strength = abs(reduced[j, k]) * abs(reduced[k, j]) / (scale[j] * scale[k])
        cooperativities[label] = float(4.0 * strength)
    n_eff = tuple(
        float(effective_occupation(modes[m].linewidth, modes[m].bath_occupation, g))
        for m, g in zip(("mech1", "mech2"), gamma_eff)
    )

    rotating_wave: dict[str, float] = {network.mode_ids[i]: 0.0 for i in auxiliary}
    for offset in diagnostic_offsets if diagnostic_offsets is not None else [probe_offset]:
        current = assemble_M(network, offset)
        labels = list(network.mode_ids)
        for k in sorted(auxiliary, reverse=True):
            rotating_wave[labels[k]] = max(rotating_wave[labels[k]], correction_size(current, k))
            current = reduce_mode(current, k)
            del labels[k]

    largest = max(rotating_wave.items(), key=lambda item: item[1], default=None)
    if largest is not None:
        logger.info(f"Largest correction from an eliminated mode: {largest[0]} ({largest[1]:.3e})")
    return EffectiveParameters(
        gamma_eff=gamma_eff,
        cooperativities=cooperativities,
        n_eff=n_eff,
        kappa_eff=kappa_eff,
        frequency_pull=pull,
        rotating_wave=rotating_wave,
        mode_count=network.size,
        coupling_count=len(network.couplings),
    )


def effective_parameters(
    device: DeviceModel,
    drives: Union[DriveSettings, Sequence[DriveTone]],
    depth: int = 1,
    probe_offset: float = 0.0,
    diagnostic_offsets: Optional[Sequence[float]] = None,
) -> EffectiveParameters:
    """Effective linewidths, cooperativities and occupations of the expanded device.

    All auxiliary modes are eliminated at ``probe_offset`` (band center by
    default); Γ_eff = 2 Im(M'_kk) Γ_k and the couplings are renormalized to
    the effective linewidths.
    """
    tones = drives.drive_tones(device) if isinstance(drives, DriveSettings) else list(drives)
    network = build_expanded_network(device, tones, depth)
    effective = effective_from_network(network, probe_offset, diagnostic_offsets)
    logger.info(
        f"Effective linewidths {effective.gamma_eff[0]:.4g} Hz / {effective.gamma_eff[1]:.4g} Hz, "
        f"occupations {effective.n_eff[0]:.4g} / {effective.n_eff[1]:.4g}"
    )
    return effective


def depth_convergence(
    device: DeviceModel, drives: Union[DriveSettings, Sequence[DriveTone]], depths: Sequence[int]
) -> list[dict]:
    tones = drives.drive_tones(device) if isinstance(drives, DriveSettings) else list(drives)
    rows = []
    for depth in depths:
        network = build_expanded_network(device, tones, depth)
        effective = effective_from_network(network)
        rows.append(
            {
                "depth": depth,
                "modes": network.size,
                "couplings": len(network.couplings),
                "gamma1_eff_hz": effective.gamma_eff[0],
                "gamma2_eff_hz": effective.gamma_eff[1],
            }
        )
    return rows
