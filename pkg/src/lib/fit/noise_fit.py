import logging
from typing import Union

import numpy as np
from scipy.optimize import lsq_linear

from ...exceptions import FitError, RankDeficientError
from ..expansion import ScatteringModel
from ..network.scattering import scattering_batch
from .problem import FitReport, NoiseFitProblem

logger = logging.getLogger(__name__)


def bath_parameter(oscillator: str) -> str:
    """Model parameter holding an oscillator's bath occupation (mech1 -> device.n1)."""
    if not oscillator.startswith("mech"):
        raise ValueError(f"Only mechanical baths can be fitted, got {oscillator!r}")
    return f"device.n{oscillator[-1]}"


def noise_design_matrix(problem: NoiseFitProblem, model: ScatteringModel) -> tuple[np.ndarray, list[str]]:
    """Columns: Σ|S_jk|² over the modes of each bath, then optional added-noise indicators per port."""
    data = problem.data
    network = model.network()
    oscillators = np.array([mode.oscillator for mode in network.modes])
    unknown = set(problem.baths) - set(oscillators)
    if unknown:
        raise ValueError(f"Unknown bath oscillators {sorted(unknown)}")

    weights = np.empty((len(data), network.size))
    for phase, indices in data.phase_groups():
        offsets, inverse = np.unique(data.offsets[indices], return_inverse=True)
        S, _ = scattering_batch(network, offsets, phase)
        rows = np.array([network.index(port) for port in data.port_out[indices]])
        weights[indices] = np.abs(S[inverse, rows, :]) ** 2

    columns = [weights[:, oscillators == bath].sum(axis=1) for bath in problem.baths]
    names = [bath_parameter(bath) for bath in problem.baths]
    if problem.fit_added_noise:
        for port in sorted(set(data.port_out)):
            columns.append((data.port_out == port).astype(float))
            names.append(f"n_amp.{port}")
    return np.column_stack(columns), names


def fit_noise(problem: NoiseFitProblem, fixed_scattering: Union[FitReport, ScatteringModel]) -> FitReport:
    """Linear fit of bath occupations with the scattering parameters held fixed.

    Bounded-variable least squares keeps every occupation nonnegative.
    """
    model = fixed_scattering.model if isinstance(fixed_scattering, FitReport) else fixed_scattering
    if model is None:
        raise FitError("The scattering fit report carries no model to hold fixed")

    data = problem.data
    A, names = noise_design_matrix(problem, model)
    y = data.values.copy()
    if not problem.fit_added_noise:
        y -= np.array([problem.chain.port(port).added_noise for port in data.port_out])

    w = data.weights
    A, y = A * w[:, np.newaxis], y * w
    if not np.all(np.isfinite(A)):
        raise FitError("Noise design matrix has unsolved grid points")

    rank = np.linalg.matrix_rank(A)
    if rank < A.shape[1]:
        _, singular, vt = np.linalg.svd(A, full_matrices=False)
        null = vt[singular <= singular[0] * 1e-10] if singular[0] > 0 else vt
        involved = [names[i] for i in np.flatnonzero(np.any(np.abs(null) > 1e-6, axis=0))]
        raise RankDeficientError(
            f"Noise design matrix has rank {rank} < {A.shape[1]}; indistinguishable: {involved}", involved
        )

    result = lsq_linear(A, y, bounds=(0.0, np.inf), method="bvls")
    residual = A @ result.x - y
    variance = float(residual @ residual) / max(len(y) - len(names), 1)
    errors = np.sqrt(np.clip(np.diag(np.linalg.inv(A.T @ A)) * variance, 0.0, None))

    fitted = dict(zip(names, result.x.tolist()))
    logger.info(f"Noise fit: {', '.join(f'{k}={v:.4g}' for k, v in fitted.items())}")
    occupations = {name: value for name, value in fitted.items() if name.startswith("device.")}
    return FitReport(
        parameters=fitted,
        standard_errors=dict(zip(names, errors.tolist())),
        residual_norm=float(np.linalg.norm(residual)),
        initial_residual_norm=float(np.linalg.norm(y)),
        nfev=int(result.nit),
        status=int(result.status),
        message=str(result.message),
        model=model.with_values(occupations),
    )
