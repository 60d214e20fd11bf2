import logging
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

from ...exceptions import FitConvergenceError, FitError
from ..expansion import ScatteringModel
from ..expansion.reduction import effective_from_network
from ..network.scattering import scattering_batch
from .problem import FitProblem, FitReport, ObservedMap

logger = logging.getLogger(__name__)

DIFF_STEP = 1e-6
TOLERANCE = 1e-9
ITERATION_BUDGET = 500
RESTART_SPREAD = 0.2
# Singular values below this fraction of the largest mark a null-space direction
RANK_RTOL = 1e-10


def predict_power(model: ScatteringModel, data: ObservedMap) -> np.ndarray:
    """Model |S_out,in|² at every observation."""
    network = model.network()
    predicted = np.empty(len(data))
    for phase, indices in data.phase_groups():
        offsets, inverse = np.unique(data.offsets[indices], return_inverse=True)
        S, _ = scattering_batch(network, offsets, phase)
        rows = np.array([network.index(port) for port in data.port_out[indices]])
        cols = np.array([network.index(port) for port in data.port_in[indices]])
        predicted[indices] = np.abs(S[inverse, rows, cols]) ** 2
    return predicted


def _covariance(jac: np.ndarray, cost: float, names: list[str]) -> tuple[np.ndarray, list[dict[str, float]]]:
    m, n = jac.shape
    _, singular, vt = np.linalg.svd(jac, full_matrices=False)
    keep = singular > RANK_RTOL * singular[0] if singular.size and singular[0] > 0 else np.zeros(n, dtype=bool)
    null_space = [
        {name: float(component) for name, component in zip(names, vt[i])} for i in np.flatnonzero(~keep)
    ]
    variance = 2.0 * cost / max(m - n, 1)
    inverse = (vt[keep].T / singular[keep] ** 2) @ vt[keep]
    return variance * inverse, null_space


def fit_scattering(problem: FitProblem, restarts: int = 0, seed: Optional[int] = None) -> FitReport:
    """Nonlinear least-squares fit of an |S|² map to the forward model.

    Levenberg-Marquardt without bounds, trust-region reflective with bounds.
    Parameters are scaled by their starting values; seeded restarts perturb
    the start by up to ±20% and the lowest cost wins.
    """
    names = problem.names
    data = problem.data
    x0 = problem.initial_values()
    scale = np.where(x0 != 0, np.abs(x0), 1.0)
    lower = np.array([p.lower for p in problem.free]) / scale
    upper = np.array([p.upper for p in problem.free]) / scale
    bounded = bool(np.isfinite(lower).any() or np.isfinite(upper).any())
    weights = data.weights

    def residuals(z: np.ndarray) -> np.ndarray:
        model = problem.model.with_values(dict(zip(names, z * scale)))
        return (predict_power(model, data) - data.values) * weights

    start = x0 / scale
    initial = residuals(start)
    if not np.all(np.isfinite(initial)):
        raise FitError("Model residuals are not finite at the initial parameters")

    rng = np.random.default_rng(seed)
    starts = [start]
    for _ in range(restarts):
        jittered = start * (1.0 + rng.uniform(-RESTART_SPREAD, RESTART_SPREAD, start.size))
        starts.append(np.clip(jittered, lower, upper))

    n = len(names)
    best = None
    for attempt, z0 in enumerate(starts):
        result = least_squares(
            residuals,
            z0,
            method="trf" if bounded else "lm",
            bounds=(lower, upper) if bounded else (-np.inf, np.inf),
            diff_step=DIFF_STEP,
            ftol=TOLERANCE,
            xtol=TOLERANCE,
            max_nfev=ITERATION_BUDGET * (n + 1),
        )
        logger.debug(f"Fit start {attempt}: cost {result.cost:.6e}, status {result.status}")
        if best is None or result.cost < best.cost:
            best = result

    fitted = dict(zip(names, (best.x * scale).tolist()))
    if best.status == 0:
        raise FitConvergenceError(
            f"Scattering fit did not converge within {ITERATION_BUDGET * (n + 1)} evaluations", best=fitted
        )
    if best.status < 0:
        raise FitError(f"Scattering fit failed: {best.message}")

    covariance, null_space = _covariance(best.jac, best.cost, names)
    errors = np.sqrt(np.clip(np.diag(covariance), 0.0, None)) * scale
    if null_space:
        logger.warning(f"Rank-deficient Jacobian: {len(null_space)} parameter combinations are not identifiable")

    model = problem.model.with_values(fitted)
    report = FitReport(
        parameters=fitted,
        standard_errors=dict(zip(names, errors.tolist())),
        residual_norm=float(np.linalg.norm(best.fun)),
        initial_residual_norm=float(np.linalg.norm(initial)),
        nfev=int(best.nfev),
        status=int(best.status),
        message=str(best.message),
        rank_deficient=bool(null_space),
        null_space=null_space,
        restarts=restarts,
        effective=effective_from_network(model.network()),
        model=model,
    )
    logger.info(
        f"Scattering fit converged after {report.nfev} evaluations: residual norm "
        f"{report.initial_residual_norm:.4e} -> {report.residual_norm:.4e}"
    )
    return report
