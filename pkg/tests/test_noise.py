import numpy as np
import pytest
from scipy.constants import hbar
from scipy.integrate import IntegrationWarning

from src.exceptions import IntegrationError
from src.lib.design.isolator import IsolatorSpec, isolator_network, optimal_detuning, optimal_loop_phase
from src.lib.network.modes import Mode, ModeNetwork
from src.lib.noise import occupancy as occupancy_module
from src.lib.noise.chain import AmplifierChain, PortChain, chain_referred_power
from src.lib.noise.occupancy import mechanical_occupancy, occupancy_vs_phase
from src.lib.noise.spectra import noise_map, output_noise

from .conftest import random_network

EFFECTIVE_BATHS = {"mech1": 0.89, "mech2": 12.0}


def with_baths(network: ModeNetwork, baths: dict[str, float]) -> ModeNetwork:
    modes = tuple(
        mode.model_copy(update={"bath_occupation": baths.get(mode.id, mode.bath_occupation)}) for mode in network.modes
    )
    return ModeNetwork(
        modes=modes, couplings=network.couplings, loop_phase=network.loop_phase, phase_drive=network.phase_drive
    )


def ideal_network(C: float = 1e4) -> ModeNetwork:
    phase = optimal_loop_phase(C, C)[0]
    delta3, delta4 = optimal_detuning(C, C, phase)[0]
    spec = IsolatorSpec(C3=C, C4=C, loop_phase=phase, delta3=delta3, delta4=delta4)
    return with_baths(isolator_network(spec), EFFECTIVE_BATHS)


def test_isolated_port_carries_mechanical_noise():
    network = ideal_network()
    chain = AmplifierChain()
    isolated = output_noise(network, chain, "cavity1", [0.0])
    transmitting = output_noise(network, chain, "cavity2", [0.0])
    assert isolated.quanta[0] == pytest.approx(6.4, abs=0.2)
    assert isolated.quanta[0] == pytest.approx(0.5 * (0.89 + 12.0), rel=0.02)
    assert transmitting.quanta[0] < 0.2


def test_noise_ports_swap_with_phase():
    network = ideal_network()
    phase = network.loop_phase
    result = noise_map(network, AmplifierChain(), ["cavity1", "cavity2"], [0.0], [phase, -phase])
    assert result.quanta_for("cavity1")[0, 0] == pytest.approx(result.quanta_for("cavity2")[1, 0], rel=0.02)
    assert result.quanta_for("cavity2")[0, 0] == pytest.approx(result.quanta_for("cavity1")[1, 0], abs=0.2)


def test_zero_baths_give_vacuum_floor(effective_model):
    network = effective_model.with_values({"device.n1": 0.0, "device.n2": 0.0}).network()
    chain = AmplifierChain(ports={"cavity1": PortChain(gain=1e6, added_noise=20.0)})
    offsets = np.linspace(-5e3, 5e3, 11)
    spectrum = output_noise(network, chain, "cavity1", offsets)
    np.testing.assert_allclose(spectrum.quanta, 0.0, atol=1e-12)

    carrier = network.mode("cavity1").signal_freq
    floor = hbar * 2 * np.pi * carrier * 1e6 * 21.0
    assert carrier == pytest.approx(6.528e9)
    np.testing.assert_allclose(spectrum.power, floor, rtol=1e-6)
    assert np.all(spectrum.power >= hbar * 2 * np.pi * (carrier + offsets) * 1e6 * 21.0 * (1 - 1e-12))


def test_chain_referred_power():
    chain = PortChain(gain=100.0, added_noise=30.0)
    assert chain_referred_power(2.0, 5e9, chain) == pytest.approx(hbar * 2 * np.pi * 5e9 * 100.0 * 33.0)


def test_chain_power_needs_positive_frequency():
    chain = PortChain(gain=1e6, added_noise=20.0)
    power = chain_referred_power(0.0, np.array([-5.0, 0.0, 5.0]), chain)
    assert np.isnan(power[:2]).all()
    assert power[2] > 0


def test_chain_rejects_attenuation():
    with pytest.raises(ValueError):
        PortChain(gain=0.5)


def test_noise_map_rows_and_threads(rng):
    network = with_baths(random_network(rng, size=4), {"m2": 3.0, "m3": 1.0})
    phases = np.linspace(-np.pi, np.pi, 5)
    serial = noise_map(network, AmplifierChain(), ["m0", "m1"], [-1.0, 0.0, 1.0], phases)
    threaded = noise_map(network, AmplifierChain(), ["m0", "m1"], [-1.0, 0.0, 1.0], phases, threads=2)
    np.testing.assert_array_equal(serial.quanta, threaded.quanta)
    rows = list(serial.rows())
    assert len(rows) == 5 * 3 * 2
    assert rows[0]["port_in"] == ""
    assert "power_w_hz" in rows[0]


def test_single_mode_occupancy_equals_bath():
    network = ModeNetwork(
        modes=(Mode(id="m", oscillator="m", resonance_freq=0.0, linewidth=3.0, bath_occupation=7.0),)
    )
    assert mechanical_occupancy(network, "m") == pytest.approx(7.0)
    assert mechanical_occupancy(network, "m", method="quadrature") == pytest.approx(7.0, rel=1e-6)


def test_quadrature_failure_reports_partial_sum(monkeypatch):
    calls = []

    def stalled_quad(func, low, high, limit):
        calls.append((low, high))
        if len(calls) > 1:
            raise IntegrationWarning("maximum number of subdivisions reached")
        return 3.0, 0.0

    monkeypatch.setattr(occupancy_module, "quad", stalled_quad)
    network = ModeNetwork(
        modes=(Mode(id="m", oscillator="m", resonance_freq=0.0, linewidth=3.0, bath_occupation=7.0),)
    )
    with pytest.raises(IntegrationError) as caught:
        mechanical_occupancy(network, "m", method="quadrature")
    assert len(calls) == 2
    assert caught.value.partial == pytest.approx(3.0 / (2 * np.pi * 3.0))


def test_occupancy_methods_agree(rng):
    network = with_baths(random_network(rng, size=4), {"m0": 2.0, "m3": 5.0})
    for mode in ("m1", "m3"):
        lyapunov = mechanical_occupancy(network, mode)
        quadrature = mechanical_occupancy(network, mode, method="quadrature")
        assert quadrature == pytest.approx(lyapunov, rel=1e-5)


def test_unknown_occupancy_method(rng):
    with pytest.raises(ValueError):
        mechanical_occupancy(random_network(rng, size=2), "m0", method="guess")


def test_effective_occupancy_band(operating_spec):
    spec = operating_spec.replace(kappa1=1.3e6, kappa2=2.0e6)
    network = with_baths(isolator_network(spec), EFFECTIVE_BATHS)
    assert 0.1 <= mechanical_occupancy(network, "mech1", loop_phase=np.pi) <= 0.7
    for mode in ("mech1", "mech2"):
        at_zero, at_pi = occupancy_vs_phase(network, mode, [0.0, np.pi])
        assert at_zero >= at_pi > 0
