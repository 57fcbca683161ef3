"""Radio channel: unit-disk or Nakagami-m reception."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc, gammainccinv

UNIT_DISK = "unitdisk"
NAKAGAMI = "nakagami"


@dataclass(frozen=True)
class ChannelModel:
    propagation: str = UNIT_DISK
    range: float = 250.0           # nominal range R (m)
    m: float = 1.0                 # Nakagami shape
    path_loss: float = 2.0         # exponent alpha
    data_rate: float = 2_000_000.0
    collisions: bool = True
    # Nakagami receivers whose success probability is below this are ignored
    min_probability: float = 1e-2

    def __post_init__(self):
        if self.propagation not in (UNIT_DISK, NAKAGAMI):
            raise ValueError(f"unknown propagation model {self.propagation!r}")
        if self.range <= 0:
            raise ValueError("range must be positive")
        if self.m < 0.5:
            raise ValueError("Nakagami shape m must be >= 0.5")
        if self.data_rate <= 0:
            raise ValueError("data_rate must be positive")
        if self.path_loss <= 0:
            raise ValueError("path_loss exponent must be positive")
        if not 0 < self.min_probability < 1:
            raise ValueError("min_probability must be in (0, 1)")

    @property
    def cutoff(self) -> float:
        """Largest distance at which a frame can be received (and interferes)."""
        if self.propagation == UNIT_DISK:
            return self.range
        x = float(gammainccinv(self.m, self.min_probability))
        return self.range * (x / self.m) ** (1.0 / self.path_loss)

    def airtime(self, size: int, header_overhead: int = 0) -> float:
        return (size * 8 + header_overhead * 8) / self.data_rate


def perfect_channel(range: float = 250.0, data_rate: float = 2_000_000.0) -> ChannelModel:
    """Unit-disk propagation with collisions disabled."""
    return ChannelModel(UNIT_DISK, range=range, data_rate=data_rate, collisions=False)


def reception_probability(distance: float, channel: ChannelModel) -> float:
    """P(frame received) at ``distance`` in the absence of interference.

    Nakagami-m: the faded power is Gamma distributed with mean equal to the
    receive threshold at the nominal range, so P = Q(m, m (d/R)^alpha) with Q
    the regularised upper incomplete gamma function.
    """
    if distance < 0:
        raise ValueError("distance must be non-negative")
    if channel.propagation == UNIT_DISK:
        return 1.0 if distance <= channel.range else 0.0
    x = channel.m * (distance / channel.range) ** channel.path_loss
    if channel.m == 1.0:
        return math.exp(-x)
    return float(gammaincc(channel.m, x))


def reception_probabilities(distances: np.ndarray, channel: ChannelModel) -> np.ndarray:
    if channel.propagation == UNIT_DISK:
        return (distances <= channel.range).astype(float)
    m = channel.m
    x = m * (distances / channel.range) ** channel.path_loss
    if m == int(m) and m <= 8:
        # integer shape: Q(m, x) = exp(-x) * sum_{k<m} x^k / k!
        term = np.ones_like(x)
        acc = np.ones_like(x)
        for k in range(1, int(m)):
            term = term * x / k
            acc += term
        return np.exp(-x) * acc
    return gammaincc(m, x)
