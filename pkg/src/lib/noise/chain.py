import logging
from typing import Union

import numpy as np
from pydantic import BaseModel, Field
from scipy.constants import hbar

logger = logging.getLogger(__name__)


class PortChain(BaseModel):
    gain: float = Field(default=1.0, ge=1)
    added_noise: float = Field(default=0.0, ge=0)


class AmplifierChain(BaseModel):
    """Measurement chain behind each output port, in the large-gain limit."""

    ports: dict[str, PortChain] = Field(default_factory=dict)

    def port(self, port: str) -> PortChain:
        return self.ports.get(port, PortChain())


def chain_referred_power(
    quanta: Union[float, np.ndarray], signal_freq_hz: Union[float, np.ndarray], chain: PortChain
) -> np.ndarray:
    """Spectral density (W/Hz) at the chain output: ħωG(1 + n_amp + quanta).

    Only defined at positive absolute frequencies; other points come back NaN.
    """
    freq = np.asarray(signal_freq_hz, dtype=float)
    positive = freq > 0
    if not np.all(positive):
        logger.warning(
            f"{int(np.size(positive) - np.count_nonzero(positive))} signal frequencies are not positive; "
            "their chain-referred power is NaN"
        )
    omega = np.where(positive, 2.0 * np.pi * freq, np.nan)
    return hbar * omega * chain.gain * (1.0 + chain.added_noise + np.asarray(quanta, dtype=float))
