import logging
import warnings
from typing import Literal, Optional, Sequence

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.linalg import solve_continuous_lyapunov

from ...exceptions import IntegrationError
from ..network.modes import ModeNetwork
from ..network.scattering import assemble_M

logger = logging.getLogger(__name__)


def _lyapunov_occupancy(network: ModeNetwork, j: int, loop_phase: Optional[float]) -> float:
    arrays = network.arrays
    linewidth = 1.0 / arrays.inv_linewidth
    drift = 1j * linewidth[:, np.newaxis] * assemble_M(network, 0.0, loop_phase)
    diffusion = np.diag(linewidth**2 * arrays.bath).astype(complex)
    covariance = solve_continuous_lyapunov(drift, -diffusion)
    return float(np.real(covariance[j, j]) / linewidth[j])


def _quadrature_occupancy(network: ModeNetwork, j: int, loop_phase: Optional[float]) -> float:
    arrays = network.arrays
    M0 = assemble_M(network, 0.0, loop_phase)
    unit = np.zeros(network.size, dtype=complex)
    unit[j] = 1.0

    def spectrum(offset: float) -> float:
        M = M0 + np.diag(offset * arrays.inv_linewidth)
        row = np.linalg.solve(M.T, unit)
        return float(np.sum(np.abs(row) ** 2 * arrays.bath))

    linewidth = 1.0 / arrays.inv_linewidth
    poles = np.sort(np.real(np.linalg.eigvals(-linewidth[:, np.newaxis] * M0)))
    bounds = [-np.inf, *poles, np.inf]

    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        for low, high in zip(bounds[:-1], bounds[1:]):
            if low == high:
                continue
            try:
                value, _ = quad(spectrum, low, high, limit=500)
            except IntegrationWarning as e:
                partial = total / (2.0 * np.pi * linewidth[j])
                raise IntegrationError(f"Occupancy integral did not converge on [{low:.4g}, {high:.4g}] Hz: {e}", partial)
            total += value
    return total / (2.0 * np.pi * linewidth[j])


def mechanical_occupancy(
    network: ModeNetwork,
    mode: str,
    method: Literal["lyapunov", "quadrature"] = "lyapunov",
    loop_phase: Optional[float] = None,
) -> float:
    """Steady-state quanta in one mode, ∫ df Σ_k |M⁻¹_jk(f)|² n_k / (2π γ_j).

    ``lyapunov`` evaluates the integral in closed form through the steady-state
    covariance; ``quadrature`` integrates the internal spectrum numerically.
    """
    j = network.index(mode)
    if method == "lyapunov":
        return _lyapunov_occupancy(network, j, loop_phase)
    if method == "quadrature":
        return _quadrature_occupancy(network, j, loop_phase)
    raise ValueError(f"Unknown occupancy method {method!r}")


def occupancy_vs_phase(
    network: ModeNetwork,
    mode: str,
    phases: Sequence[float],
    method: Literal["lyapunov", "quadrature"] = "lyapunov",
) -> np.ndarray:
    values = np.array([mechanical_occupancy(network, mode, method, phase) for phase in phases])
    logger.info(f"Occupancy of {mode} over {len(values)} loop phases: {values.min():.4g} to {values.max():.4g}")
    return values
