"""Physical constants and unit conversions.

Rates and Rabi frequencies are angular (s^-1) everywhere inside the package;
the helpers here are the only place the 2*pi factor is applied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import constants as _sc

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = _sc.hbar
    h: float = _sc.h
    bohr_radius: float = _sc.physical_constants["Bohr radius"][0]
    elementary_charge: float = _sc.e
    bohr_magneton: float = _sc.physical_constants["Bohr magneton"][0]
    boltzmann: float = _sc.k
    atomic_mass: float = _sc.physical_constants["atomic mass constant"][0]

    @property
    def e_a0_sq(self) -> float:
        """One e*a0^2 in C m^2."""
        return self.elementary_charge * self.bohr_radius**2

    @property
    def bohr_magneton_hz_per_gauss(self) -> float:
        # mu_B / h, with 1 G = 1e-4 T
        return self.bohr_magneton / self.h * 1e-4


CONSTANTS = PhysicalConstants()

VCM_TO_VM = 1e2
VCM2_TO_VM2 = 1e4


def hz_to_angular(f):
    return TWO_PI * f


def angular_to_hz(w):
    return w / TWO_PI
