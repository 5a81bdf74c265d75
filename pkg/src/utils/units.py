"""Oscillator units for the two-body spring problem."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EckartUnits:
    """Energies in hbar*omega and lengths in the oscillator length (hbar/(mu*omega))^(1/2)."""
    hbar: float
    mu: float
    omega: float

    @property
    def energy(self) -> float:
        return self.hbar * self.omega

    @property
    def length(self) -> float:
        return float(np.sqrt(self.hbar / (self.mu * self.omega)))

    def to_internal_energy(self, e):
        return np.asarray(e) / self.energy

    def to_internal_length(self, r):
        return np.asarray(r) / self.length

    def epsilon(self, a: float) -> float:
        """Expansion parameter (hbar/(mu omega a^2))^(1/2) for rest length a."""
        return self.length / a

    def rest_length(self, epsilon: float) -> float:
        return self.length / epsilon
