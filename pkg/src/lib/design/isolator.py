import logging
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import brentq, minimize

from ...exceptions import DesignDomainError, OptimizerConvergenceError
from ..network.modes import Coupling, Mode, ModeNetwork
from ..network.scattering import (
    assemble_M,
    insertion_loss_db,
    isolation_db,
    scattering,
    scattering_batch,
    solve_scattering,
)

logger = logging.getLogger(__name__)

# Cavity linewidth used when none is given, relative to the widest mechanical mode
WIDE_CAVITY_RATIO = 1e4

CAVITY1, CAVITY2, MECH1, MECH2 = 0, 1, 2, 3
EDGE_DRIVES = ("11", "12", "21", "22")


class IsolatorSpec(BaseModel):
    """Four-mode isolator in normalized units.

    Detunings are in units of the respective mechanical linewidth. Leaving
    them unset selects the forward impedance-matched branch.
    """

    model_config = ConfigDict(frozen=True)

    C3: float = Field(gt=0)
    C4: float = Field(gt=0)
    eta1: float = Field(default=1.0, ge=0, le=1)
    eta2: float = Field(default=1.0, ge=0, le=1)
    gamma3: float = Field(default=1.0, gt=0)
    gamma4: float = Field(default=1.0, gt=0)
    loop_phase: float = 0.0
    delta3: Optional[float] = None
    delta4: Optional[float] = None
    # (C11, C12, C21, C22): cavity j to mechanical mode k
    edge_cooperativities: Optional[tuple[float, float, float, float]] = None
    kappa1: Optional[float] = Field(default=None, gt=0)
    kappa2: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def check_inputs(self):
        if (self.delta3 is None) != (self.delta4 is None):
            raise ValueError("delta3 and delta4 must be given together")
        if self.edge_cooperativities is not None and min(self.edge_cooperativities) <= 0:
            raise ValueError(f"Edge cooperativities must be positive, got {self.edge_cooperativities}")
        return self

    @classmethod
    def from_edges(cls, c11: float, c12: float, c21: float, c22: float, **kwargs) -> "IsolatorSpec":
        return cls(
            C3=float(np.sqrt(c11 * c21)),
            C4=float(np.sqrt(c12 * c22)),
            edge_cooperativities=(c11, c12, c21, c22),
            **kwargs,
        )

    @property
    def edges(self) -> tuple[float, float, float, float]:
        if self.edge_cooperativities is not None:
            return self.edge_cooperativities
        return (self.C3, self.C4, self.C3, self.C4)

    @property
    def symmetric(self) -> bool:
        c11, c12, c21, c22 = self.edges
        return bool(np.isclose(c11, c21) and np.isclose(c12, c22))

    @property
    def cavity_linewidths(self) -> tuple[float, float]:
        wide = WIDE_CAVITY_RATIO * max(self.gamma3, self.gamma4)
        return (self.kappa1 or wide, self.kappa2 or wide)

    def replace(self, **changes) -> "IsolatorSpec":
        return self.model_copy(update=changes)


class DesignPoint(BaseModel):
    phase_opt: float
    delta_opt: float
    delta4: float
    delta_T: float = Field(ge=-1, le=1)
    bandwidth: Optional[float] = None


class DesignPair(BaseModel):
    """Optimum at +φ (forward transmission, ΔT > 0) and its mirror at -φ."""

    forward: DesignPoint
    reverse: DesignPoint


def optimal_detuning(C3: float, C4: float, phase: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """Impedance-matched detuning pairs (δ3, δ4 = -δ3).

    The first pair (δ3 = -½√R) is the branch with ΔT of the same sign as
    sin φ; the second is its mirror.
    """
    radicand = 2.0 * C3 * C4 * (1.0 - np.cos(phase)) - 1.0
    if radicand < 0:
        raise DesignDomainError(
            f"No impedance-matched detuning at this phase/cooperativity "
            f"(C3={C3:g}, C4={C4:g}, phase={np.degrees(phase):.3f} deg)"
        )
    half_root = 0.5 * float(np.sqrt(radicand))
    return (-half_root, half_root), (half_root, -half_root)


def optimal_loop_phase(C3: float, C4: float) -> tuple[float, float]:
    argument = 1.0 - 1.0 / np.sqrt(C3 * C4)
    if not -1.0 <= argument <= 1.0:
        raise DesignDomainError(f"arccos argument {argument:.6g} outside [-1, 1] for C3={C3:g}, C4={C4:g}")
    phase = float(np.arccos(argument))
    return phase, -phase


def isolation_detunings(spec: IsolatorSpec, phase: Optional[float] = None) -> tuple[float, float]:
    """Detunings that cancel reverse transmission S12 exactly.

    Holds for any edge cooperativities; for symmetric edges this is
    δ3 = -δ4 = -½cot(φ/2). At φ = 0 or π no such detuning exists and (0, 0)
    is returned.
    """
    phase = spec.loop_phase if phase is None else phase
    c11, c12, c21, c22 = spec.edges
    ratio = float(np.sqrt(c12 * c22) / np.sqrt(c11 * c21))
    psi = phase + np.pi
    if abs(np.sin(psi)) < 1e-12:
        return 0.0, 0.0
    delta3 = (1.0 / ratio - np.cos(psi)) / (2.0 * np.sin(psi))
    delta4 = ratio * (np.cos(psi) * delta3 - np.sin(psi) / 2.0)
    return float(delta3), float(delta4)


def resolved_detunings(spec: IsolatorSpec) -> tuple[float, float]:
    if spec.delta3 is not None:
        return spec.delta3, spec.delta4
    try:
        return optimal_detuning(spec.C3, spec.C4, spec.loop_phase)[0]
    except DesignDomainError:
        logger.debug("Impedance matching impossible at this phase, using isolation-nulling detunings")
        return isolation_detunings(spec)


def isolator_network(spec: IsolatorSpec, loop_phase: Optional[float] = None) -> ModeNetwork:
    delta3, delta4 = resolved_detunings(spec)
    kappa1, kappa2 = spec.cavity_linewidths
    modes = (
        Mode(id="cavity1", oscillator="cavity1", resonance_freq=0.0, linewidth=kappa1, coupling_efficiency=spec.eta1, signal_freq=0.0),
        Mode(id="cavity2", oscillator="cavity2", resonance_freq=0.0, linewidth=kappa2, coupling_efficiency=spec.eta2, signal_freq=0.0),
        Mode(id="mech1", oscillator="mech1", resonance_freq=0.0, linewidth=spec.gamma3, signal_freq=delta3 * spec.gamma3),
        Mode(id="mech2", oscillator="mech2", resonance_freq=0.0, linewidth=spec.gamma4, signal_freq=delta4 * spec.gamma4),
    )
    couplings = tuple(
        Coupling(mode_a=f"cavity{drive[0]}", mode_b=f"mech{drive[1]}", magnitude=0.5 * np.sqrt(c), drive=drive)
        for drive, c in zip(EDGE_DRIVES, spec.edges)
    )
    phase = spec.loop_phase if loop_phase is None else loop_phase
    return ModeNetwork(modes=modes, couplings=couplings, loop_phase=phase, phase_drive="12")


def closed_form_transmission_difference(C3: float, C4: float, eta1: float, eta2: float, phase: float) -> float:
    """ΔT at the forward impedance-matched detuning, closed form (sin φ odd)."""
    cos_phase = np.cos(phase)
    radicand = 2.0 * C3 * C4 * (1.0 - cos_phase) - 1.0
    if radicand < 0:
        raise DesignDomainError(f"Closed form needs 2·C3·C4·(1 - cos φ) ≥ 1, got {radicand + 1:.6g}")
    numerator = 4.0 * eta1 * eta2 * np.sin(phase) * np.sqrt(radicand)
    denominator = 2.0 + (1.0 - cos_phase) * (C3**2 + C4**2 + 2 * C3 + 2 * C4 - 2 * C3 * C4 * cos_phase)
    return float(numerator / denominator)


def optimal_transmission_difference(C3: float, C4: float, eta1: float = 1.0, eta2: float = 1.0) -> float:
    """Closed-form ΔT at φ_opt with matched detunings; η1η2(1 - 1/2C) when C3 = C4."""
    root3, root4 = np.sqrt(C3), np.sqrt(C4)
    return float(eta1 * eta2 * (8.0 * root3 * root4 - 4.0) / ((C3 - C4) ** 2 + 2.0 * (root3 + root4) ** 2))


def exact_transmission_difference(spec: IsolatorSpec, probe_offset: float = 0.0) -> float:
    S = scattering(isolator_network(spec), probe_offset)
    return float(abs(S[CAVITY2, CAVITY1]) ** 2 - abs(S[CAVITY1, CAVITY2]) ** 2)


def transmission_difference(spec: IsolatorSpec) -> float:
    """ΔT = |S21|^2 - |S12|^2.

    Uses the closed form when the design sits on the forward matched branch
    with symmetric edges, and the exact scattering matrix otherwise.
    """
    if spec.eta1 * spec.eta2 == 0:
        return 0.0
    if spec.symmetric:
        try:
            matched = optimal_detuning(spec.C3, spec.C4, spec.loop_phase)[0]
        except DesignDomainError:
            matched = None
        on_branch = matched is not None and (
            spec.delta3 is None or np.allclose((spec.delta3, spec.delta4), matched, rtol=1e-9, atol=1e-12)
        )
        if on_branch:
            return closed_form_transmission_difference(spec.C3, spec.C4, spec.eta1, spec.eta2, spec.loop_phase)
    return exact_transmission_difference(spec)


def ideal_scattering(eta1: float = 1.0, eta2: float = 1.0) -> np.ndarray:
    """High-cooperativity |S|^2 of the optimal forward isolator (ports cavity1, cavity2, mech1, mech2)."""
    pattern = np.array(
        [
            [0.0, 0.0, 0.5, 0.5],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.5, 0.25, 0.25],
            [0.0, 0.5, 0.25, 0.25],
        ]
    )
    eta = np.array([eta1, eta2, 1.0, 1.0])
    power = pattern * np.outer(eta, eta)
    power[CAVITY1, CAVITY1] = (1.0 - eta1) ** 2
    power[CAVITY2, CAVITY2] = (1.0 - eta2) ** 2
    return power


def _design_objective(spec: IsolatorSpec):
    base = isolator_network(spec.replace(delta3=0.0, delta4=0.0))
    sqrt_eta = base.arrays.sqrt_eta

    def delta_T(phase: float, delta3: float, delta4: float) -> float:
        M = assemble_M(base, 0.0, phase)
        M[MECH1, MECH1] += delta3
        M[MECH2, MECH2] += delta4
        S = solve_scattering(M, sqrt_eta)
        return float(abs(S[CAVITY2, CAVITY1]) ** 2 - abs(S[CAVITY1, CAVITY2]) ** 2)

    return delta_T


def _seed(spec: IsolatorSpec, delta_T) -> tuple[float, float, float]:
    candidates: list[tuple[float, float, float]] = []
    try:
        phase = optimal_loop_phase(spec.C3, spec.C4)[0]
        candidates.append((phase, *optimal_detuning(spec.C3, spec.C4, phase)[0]))
    except DesignDomainError:
        pass

    # Coarse pre-scan keeps the search away from the reciprocal saddle at φ = 0
    grid = np.unique(np.concatenate([np.linspace(0.05, np.pi - 0.05, 36), np.geomspace(1e-3, 0.5, 24)]))
    for phase in grid:
        candidates.append((float(phase), *isolation_detunings(spec, phase)))
        try:
            candidates.append((float(phase), *optimal_detuning(spec.C3, spec.C4, phase)[0]))
        except DesignDomainError:
            pass
    return max(candidates, key=lambda c: delta_T(*c))


def optimize_design(
    C3: float,
    C4: float,
    eta1: float = 1.0,
    eta2: float = 1.0,
    gamma3: Optional[float] = None,
    gamma4: Optional[float] = None,
    edge_cooperativities: Optional[tuple[float, float, float, float]] = None,
    maxiter: int = 6000,
) -> DesignPair:
    """Maximize the exact ΔT over (φ, δ3, δ4) with a Nelder-Mead simplex.

    The search runs in variables scaled by the seed point, which comes from
    the closed forms and a coarse φ pre-scan.
    """
    spec = IsolatorSpec(C3=C3, C4=C4, eta1=eta1, eta2=eta2, edge_cooperativities=edge_cooperativities)
    bandwidth = nonreciprocal_bandwidth(gamma3, gamma4) if gamma3 and gamma4 else None

    if eta1 * eta2 == 0:
        try:
            phase = optimal_loop_phase(C3, C4)[0]
        except DesignDomainError:
            phase = np.pi / 2
        logger.info("Zero input coupling: transmission difference vanishes identically")
        return DesignPair(
            forward=DesignPoint(phase_opt=phase, delta_opt=0.0, delta4=0.0, delta_T=0.0, bandwidth=bandwidth),
            reverse=DesignPoint(phase_opt=-phase, delta_opt=0.0, delta4=0.0, delta_T=0.0, bandwidth=bandwidth),
        )

    delta_T = _design_objective(spec)
    seed = np.array(_seed(spec, delta_T))
    scale = np.array([abs(seed[0]), max(abs(seed[1]), 0.5), max(abs(seed[2]), 0.5)])

    result = minimize(
        lambda x: -delta_T(*(x * scale)),
        seed / scale,
        method="Nelder-Mead",
        options={"xatol": 1e-8, "fatol": 1e-13, "maxiter": maxiter, "maxfev": 2 * maxiter},
    )
    phase, delta3, delta4 = result.x * scale
    if phase < 0:
        phase, delta3, delta4 = -phase, -delta3, -delta4
    best = DesignPoint(
        phase_opt=float(phase), delta_opt=float(delta3), delta4=float(delta4),
        delta_T=float(np.clip(-result.fun, -1, 1)), bandwidth=bandwidth,
    )
    if not result.success:
        raise OptimizerConvergenceError(
            f"Design optimizer did not converge after {result.nit} iterations: {result.message}", best=best
        )

    logger.info(
        f"Optimal design for C3={C3:g}, C4={C4:g}: phase={np.degrees(phase):.4f} deg, "
        f"delta3={delta3:.6g}, delta4={delta4:.6g}, delta_T={best.delta_T:.6f} ({result.nfev} evaluations)"
    )
    reverse = DesignPoint(
        phase_opt=-best.phase_opt, delta_opt=best.delta_opt, delta4=best.delta4,
        delta_T=float(np.clip(delta_T(-best.phase_opt, best.delta_opt, best.delta4), -1, 1)),
        bandwidth=bandwidth,
    )
    return DesignPair(forward=best, reverse=reverse)


def nonreciprocal_bandwidth(gamma3: float, gamma4: float) -> float:
    if gamma3 <= 0 or gamma4 <= 0:
        raise ValueError(f"Linewidths must be positive, got {gamma3}, {gamma4}")
    return 4.0 * gamma3 * gamma4 / (gamma3 + gamma4)


def reciprocal_bandwidth(gamma: float, C: float) -> float:
    if gamma <= 0 or C < 0:
        raise ValueError(f"Need gamma > 0 and C >= 0, got gamma={gamma}, C={C}")
    return gamma * (1.0 + 2.0 * C)


def lorentzian_profile(spec: IsolatorSpec, offsets: Sequence[float]) -> np.ndarray:
    width = nonreciprocal_bandwidth(spec.gamma3, spec.gamma4)
    offsets = np.asarray(offsets, dtype=float)
    return spec.eta1 * spec.eta2 * width**2 / (width**2 + 4.0 * offsets**2)


def delta_T_profile(spec: IsolatorSpec, offsets: Sequence[float]) -> np.ndarray:
    """Exact ΔT(ω) over probe offsets (Hz) from the full scattering matrix."""
    S, _ = scattering_batch(isolator_network(spec), offsets)
    return np.abs(S[:, CAVITY2, CAVITY1]) ** 2 - np.abs(S[:, CAVITY1, CAVITY2]) ** 2


def numerical_bandwidth(spec: IsolatorSpec) -> float:
    """FWHM (Hz) of the exact ΔT(ω), from the half-maximum crossing on each side of zero offset."""
    network = isolator_network(spec)

    def delta_T(offset: float) -> float:
        S = scattering(network, offset)
        return float(abs(S[CAVITY2, CAVITY1]) ** 2 - abs(S[CAVITY1, CAVITY2]) ** 2)

    peak = delta_T(0.0)
    if peak <= 0:
        raise DesignDomainError(f"No forward transmission peak at zero offset (ΔT = {peak:.3g})")

    def excess(offset: float) -> float:
        return delta_T(offset) - 0.5 * peak

    edges = []
    for direction in (1.0, -1.0):
        reach = direction * nonreciprocal_bandwidth(spec.gamma3, spec.gamma4)
        for _ in range(60):
            if excess(reach) < 0:
                break
            reach *= 2.0
        else:
            raise DesignDomainError("ΔT does not fall to half maximum within the search range")
        low, high = sorted((0.0, reach))
        edges.append(brentq(excess, low, high, xtol=1e-12 * abs(reach), rtol=1e-12))
    return float(edges[0] - edges[1])


class TradeoffPoint(BaseModel):
    phase: float
    insertion_loss_db: float
    isolation_db: float
    delta_T: float


def phase_tradeoff(spec: IsolatorSpec, phases: Sequence[float]) -> list[TradeoffPoint]:
    """Insertion loss and isolation at center frequency when only the loop phase moves.

    Drive detunings stay at the values resolved for spec.loop_phase.
    """
    delta3, delta4 = resolved_detunings(spec)
    network = isolator_network(spec.replace(delta3=delta3, delta4=delta4))
    points = []
    for phase in phases:
        S = scattering(network, 0.0, phase)
        points.append(
            TradeoffPoint(
                phase=float(phase),
                insertion_loss_db=insertion_loss_db(S, CAVITY2, CAVITY1),
                isolation_db=isolation_db(S, CAVITY1, CAVITY2),
                delta_T=float(abs(S[CAVITY2, CAVITY1]) ** 2 - abs(S[CAVITY1, CAVITY2]) ** 2),
            )
        )
    return points
