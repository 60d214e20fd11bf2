import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import networkx as nx
import numpy as np

from ...globals import MERGE_TOL_HZ
from ..network.modes import Coupling, Mode, ModeNetwork
from .device import DRIVE_LABELS, DeviceModel, DriveTone

logger = logging.getLogger(__name__)

PRINCIPAL_IDS = ("cavity1", "cavity2", "mech1", "mech2")


@dataclass(frozen=True)
class _Node:
    oscillator: str
    freq: float


@dataclass(frozen=True)
class _Link:
    cavity: _Node
    mech: _Node
    coupling: float
    drive: str


def _check_drives(drives: Sequence[DriveTone]) -> dict[str, DriveTone]:
    by_label = {drive.label: drive for drive in drives}
    if len(drives) != 4 or sorted(by_label) != list(DRIVE_LABELS):
        raise ValueError(f"Expected four drive tones, one per pair {DRIVE_LABELS}; got {[d.label for d in drives]}")
    return by_label


def _links(
    node: _Node, device: DeviceModel, drives: dict[str, DriveTone], principal_only: bool, keep_zero: bool = False
) -> Iterator[_Link]:
    """Couplings a node has through every tone.

    A tone pumped for (j, k) couples cavity j at f with mechanical mode k' at
    f - ω_jk, with strength g_jk · g0_jk'/g0_jk. Zero-strength links are
    skipped unless ``keep_zero`` is set.
    """
    kind, index = node.oscillator[:-1], int(node.oscillator[-1])
    for label in DRIVE_LABELS:
        drive = drives[label]
        j, k = drive.cavity, drive.mechanical
        if kind == "cavity":
            if j != index:
                continue
            targets = [k] if principal_only else [1, 2]
            for k_other in targets:
                coupling = drive.coupling * device.coupling_ratio(j, k, k_other)
                if coupling > 0 or keep_zero:
                    yield _Link(node, _Node(f"mech{k_other}", node.freq - drive.frequency), coupling, label)
        else:
            if principal_only and k != index:
                continue
            coupling = drive.coupling * device.coupling_ratio(j, k, index)
            if coupling > 0 or keep_zero:
                yield _Link(_Node(f"cavity{j}", node.freq + drive.frequency), node, coupling, label)


class _NodeRegistry:
    def __init__(self, tolerance: float) -> None:
        self.tolerance = tolerance
        self.nodes: list[_Node] = []
        self.ids: list[str] = []
        self._aux_count: dict[str, int] = {}

    def find(self, node: _Node) -> Optional[int]:
        for i, known in enumerate(self.nodes):
            if known.oscillator == node.oscillator and abs(known.freq - node.freq) <= self.tolerance:
                return i
        return None

    def add(self, node: _Node, principal: bool) -> int:
        if principal:
            mode_id = node.oscillator
        else:
            count = self._aux_count.get(node.oscillator, 0) + 1
            self._aux_count[node.oscillator] = count
            mode_id = f"{node.oscillator}_aux{count}"
        self.nodes.append(node)
        self.ids.append(mode_id)
        return len(self.nodes) - 1


def _mode(node: _Node, mode_id: str, device: DeviceModel) -> Mode:
    index = int(node.oscillator[-1])
    if node.oscillator.startswith("cavity"):
        return Mode(
            id=mode_id,
            oscillator=node.oscillator,
            resonance_freq=device.cavity_freq(index),
            linewidth=device.kappa(index),
            coupling_efficiency=device.eta(index),
            signal_freq=node.freq,
            bath_occupation=0.0,
        )
    return Mode(
        id=mode_id,
        oscillator=node.oscillator,
        resonance_freq=device.mech_freq(index),
        linewidth=device.gamma(index),
        coupling_efficiency=1.0,
        signal_freq=node.freq,
        bath_occupation=device.occupation(index),
    )


def _principal_nodes(device: DeviceModel, drives: dict[str, DriveTone], registry: _NodeRegistry) -> None:
    # Placement follows every tone, switched off or not; a silent tone only drops its edge
    start = _Node("cavity1", device.cavity1_freq)
    registry.add(start, principal=True)
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for link in _links(node, device, drives, principal_only=True, keep_zero=True):
            other = link.mech if node == link.cavity else link.cavity
            if registry.find(other) is None:
                if other.oscillator in registry.ids:
                    raise ValueError(
                        f"Drive frequencies do not close the principal loop: {other.oscillator} "
                        f"appears at two signal frequencies"
                    )
                registry.add(other, principal=True)
                queue.append(other)

    missing = set(PRINCIPAL_IDS) - set(registry.ids)
    if missing:
        raise ValueError(f"Principal modes {sorted(missing)} are not reachable; check the drive couplings")


def _assemble(device: DeviceModel, drives: dict[str, DriveTone], registry: _NodeRegistry) -> ModeNetwork:
    order = [registry.ids.index(mode_id) for mode_id in PRINCIPAL_IDS]
    order += [i for i, mode_id in enumerate(registry.ids) if mode_id not in PRINCIPAL_IDS]
    modes = tuple(_mode(registry.nodes[i], registry.ids[i], device) for i in order)

    graph = nx.Graph()
    graph.add_nodes_from(registry.ids)
    couplings = []
    for node in registry.nodes:
        for link in _links(node, device, drives, principal_only=False):
            a, b = registry.find(link.cavity), registry.find(link.mech)
            if a is None or b is None:
                continue
            id_a, id_b = registry.ids[a], registry.ids[b]
            if graph.has_edge(id_a, id_b):
                if graph.edges[id_a, id_b]["drive"] != link.drive:
                    logger.warning(f"Modes {id_a} and {id_b} are coupled by two tones; keeping tone {graph.edges[id_a, id_b]['drive']}")
                continue
            graph.add_edge(id_a, id_b, drive=link.drive)
            cavity_index, mech_index = int(link.cavity.oscillator[-1]), int(link.mech.oscillator[-1])
            beta = link.coupling / np.sqrt(device.kappa(cavity_index) * device.gamma(mech_index))
            couplings.append(Coupling(mode_a=id_a, mode_b=id_b, magnitude=float(beta), drive=link.drive))

    theta = {label: drive.phase for label, drive in drives.items()}
    loop_phase = theta["12"] - theta["11"] + theta["21"] - theta["22"]
    return ModeNetwork(modes=modes, couplings=tuple(couplings), loop_phase=float(loop_phase), phase_drive="12")


def build_principal_network(device: DeviceModel, drives: Sequence[DriveTone]) -> ModeNetwork:
    """Four principal modes coupled only by their own resonant tones."""
    by_label = _check_drives(drives)
    registry = _NodeRegistry(MERGE_TOL_HZ)
    _principal_nodes(device, by_label, registry)
    scale_free = device.model_copy(update={"cross_coupling_scale": 0.0})
    return _assemble(scale_free, by_label, registry)


def build_expanded_network(device: DeviceModel, drives: Sequence[DriveTone], depth: int = 1) -> ModeNetwork:
    """Principal loop plus off-resonant copies of each oscillator.

    Modes are (oscillator, signal frequency) pairs reached within ``depth``
    coupling hops of the principal modes; the couplings are every tone-induced
    link among the collected modes. The default depth gives ten modes and
    sixteen couplings for the isolator tone layout.
    """
    if depth < 1:
        raise ValueError(f"Expansion depth must be at least 1, got {depth}")
    by_label = _check_drives(drives)
    registry = _NodeRegistry(MERGE_TOL_HZ)
    _principal_nodes(device, by_label, registry)

    frontier = list(registry.nodes)
    for _ in range(depth):
        discovered = []
        for node in frontier:
            for link in _links(node, device, by_label, principal_only=False):
                other = link.mech if node == link.cavity else link.cavity
                if registry.find(other) is None:
                    registry.add(other, principal=False)
                    discovered.append(other)
        frontier = discovered

    network = _assemble(device, by_label, registry)
    logger.info(f"Expanded network at depth {depth}: {network.size} modes, {len(network.couplings)} couplings")
    return network


def edge_list(network: ModeNetwork) -> list[dict]:
    rows = []
    for coupling in network.couplings:
        rows.append(
            {
                "mode_a": coupling.mode_a,
                "mode_b": coupling.mode_b,
                "drive": coupling.drive,
                "beta": coupling.magnitude,
                "cooperativity": 4.0 * coupling.magnitude**2,
                "signal_freq_a": network.mode(coupling.mode_a).signal_freq,
                "signal_freq_b": network.mode(coupling.mode_b).signal_freq,
            }
        )
    return rows
