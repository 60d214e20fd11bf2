import numpy as np
import pytest

from src.lib.design.isolator import IsolatorSpec, isolation_detunings
from src.lib.expansion import ModelKind, ScatteringModel
from src.lib.expansion.device import DeviceModel, DriveSettings, ToneSettings
from src.lib.network.modes import Coupling, Mode, ModeNetwork

OPERATING_PHASE_DEG = 38.0
EFFECTIVE_COOPERATIVITIES = {"11": 5.4, "12": 5.7, "21": 2.9, "22": 2.0}
EFFECTIVE_LINEWIDTHS = (1600.0, 7500.0)


def make_drives(cooperativities: dict[str, float], detunings_hz=(0.0, 0.0), phase_deg: float = 0.0) -> DriveSettings:
    return DriveSettings(
        tones=[
            ToneSettings(
                cavity=int(label[0]),
                mechanical=int(label[1]),
                cooperativity=value,
                phase_deg=phase_deg if label == "12" else 0.0,
            )
            for label, value in cooperativities.items()
        ],
        detunings_hz=detunings_hz,
    )


def random_network(
    rng: np.random.Generator,
    size: int = 6,
    random_eta: bool = False,
    signed_couplings: bool = False,
    extra_links: int = 3,
) -> ModeNetwork:
    modes = tuple(
        Mode(
            id=f"m{i}",
            oscillator=f"osc{i}",
            resonance_freq=0.0,
            linewidth=float(rng.uniform(0.5, 2.0)),
            coupling_efficiency=float(rng.uniform(0.0, 1.0)) if random_eta else 1.0,
            signal_freq=float(rng.uniform(-2.0, 2.0)),
        )
        for i in range(size)
    )
    pairs = {(i, i + 1) for i in range(size - 1)}
    target = min(size - 1 + extra_links, size * (size - 1) // 2)
    while len(pairs) < target:
        a, b = sorted(rng.choice(size, 2, replace=False))
        pairs.add((int(a), int(b)))
    couplings = tuple(
        Coupling(
            mode_a=f"m{a}",
            mode_b=f"m{b}",
            magnitude=float(rng.uniform(0.1, 1.5)),
            phase=float(rng.choice([0.0, np.pi])) if signed_couplings else 0.0,
            drive="12" if n == 0 else None,
        )
        for n, (a, b) in enumerate(sorted(pairs))
    )
    return ModeNetwork(modes=modes, couplings=couplings, loop_phase=float(rng.uniform(-np.pi, np.pi)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240518)


@pytest.fixture
def device():
    """Two-cavity, two-membrane-mode device with intrinsic mechanical damping."""
    return DeviceModel(
        cavity1_freq=6.528e9,
        cavity2_freq=6.733e9,
        kappa1=1.3e6,
        kappa2=2.0e6,
        eta1=0.99,
        eta2=0.98,
        mech1_freq=6.7e6,
        mech2_freq=9.4e6,
        gamma1=15.0,
        gamma2=19.0,
        g0={"11": 45.0, "12": 60.0, "21": 40.0, "22": 52.0},
        n1=95.0,
        n2=4700.0,
    )


@pytest.fixture
def drives():
    return make_drives({"11": 400.0, "12": 300.0, "21": 250.0, "22": 200.0}, phase_deg=OPERATING_PHASE_DEG)


@pytest.fixture
def operating_spec():
    return IsolatorSpec.from_edges(
        *EFFECTIVE_COOPERATIVITIES.values(),
        eta1=0.99,
        eta2=0.98,
        gamma3=EFFECTIVE_LINEWIDTHS[0],
        gamma4=EFFECTIVE_LINEWIDTHS[1],
        loop_phase=np.radians(OPERATING_PHASE_DEG),
    )


@pytest.fixture
def effective_device():
    """The same device described by its effective linewidths and occupations."""
    return DeviceModel(
        cavity1_freq=6.528e9,
        cavity2_freq=6.733e9,
        kappa1=1.3e6,
        kappa2=2.0e6,
        eta1=0.99,
        eta2=0.98,
        mech1_freq=6.7e6,
        mech2_freq=9.4e6,
        gamma1=EFFECTIVE_LINEWIDTHS[0],
        gamma2=EFFECTIVE_LINEWIDTHS[1],
        n1=0.89,
        n2=12.0,
        cross_coupling_scale=0.0,
    )


@pytest.fixture
def effective_drives(operating_spec):
    delta3, delta4 = isolation_detunings(operating_spec)
    detunings = (delta3 * EFFECTIVE_LINEWIDTHS[0], delta4 * EFFECTIVE_LINEWIDTHS[1])
    return make_drives(EFFECTIVE_COOPERATIVITIES, detunings, phase_deg=OPERATING_PHASE_DEG)


@pytest.fixture
def effective_model(effective_device, effective_drives):
    return ScatteringModel(device=effective_device, drives=effective_drives, kind=ModelKind.EFFECTIVE)
