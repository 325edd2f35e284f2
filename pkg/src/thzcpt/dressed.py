"""Perturbative dressed-state model of the dark line.

The weak W coupling is diagonalised first (first order in
alpha_W = Omega_W / (2 Delta_W)), which turns the N scheme into an effective
Lambda system |Q_S> - |P> - |D>.  Everything here is analytic; the Bloch
engine is the numerical reference it gets checked against.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .bloch import DIM, D, LaserParams, P, Q, S
from .species import IonSpecies

VALIDITY_THRESHOLD = 100.0
ALPHA_LIMIT = 0.1
ALPHA_WARN = 0.01


class DressedModelError(ValueError):
    pass


@dataclass(frozen=True)
class DressedModel:
    alpha_W: float
    light_shift: float
    s_Q_coeffs: tuple[float, float]
    q_S_coeffs: tuple[float, float]
    effective_rabi_QP: float
    gamma_Lambda: float
    epsilon: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ValidityFlags:
    """Margins of the three small-parameter conditions behind the linewidth formula.

    Each ratio is "large side / small side"; a condition counts as satisfied
    (green) when its ratio reaches ``threshold``.
    """

    alpha_ratio: float
    lambda_ratio: float
    branching_ratio: float
    threshold: float = VALIDITY_THRESHOLD

    @property
    def alpha_ok(self) -> bool:
        return self.alpha_ratio >= self.threshold

    @property
    def lambda_ok(self) -> bool:
        return self.lambda_ratio >= self.threshold

    @property
    def branching_ok(self) -> bool:
        return self.branching_ratio >= self.threshold

    @property
    def green(self) -> bool:
        return self.alpha_ok and self.lambda_ok and self.branching_ok

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "alpha_W^2 << 1": {"ratio": self.alpha_ratio, "ok": self.alpha_ok},
            "alpha_W^2 Omega_B^2 << Omega_R^2": {"ratio": self.lambda_ratio, "ok": self.lambda_ok},
            "beta_PD Omega_B^2 >> beta_PS Omega_R^2": {
                "ratio": self.branching_ratio, "ok": self.branching_ok},
            "green": self.green,
        }


@dataclass(frozen=True)
class LineEstimate:
    gamma_eff: float
    signal_rate: float
    center_offset: float
    validity: ValidityFlags

    def to_dict(self) -> dict:
        return {"gamma_eff": self.gamma_eff, "signal_rate": self.signal_rate,
                "center_offset": self.center_offset, "validity": self.validity.to_dict()}


def _ratio(big: float, small: float) -> float:
    if small == 0:
        return math.inf
    return big / small


def make_dressed(lasers: LaserParams, species: IonSpecies) -> DressedModel:
    if lasers.delta_W == 0:
        raise DressedModelError("Delta_W = 0: perturbation parameter alpha_W undefined")
    alpha = lasers.omega_W / (2.0 * lasers.delta_W)
    if abs(alpha) >= ALPHA_LIMIT:
        raise DressedModelError(f"|alpha_W| = {abs(alpha):.3g} outside perturbative range (< {ALPHA_LIMIT})")
    if abs(alpha) > ALPHA_WARN:
        warnings.warn(f"|alpha_W| = {abs(alpha):.3g} > {ALPHA_WARN}; first-order dressing is approximate",
                      stacklevel=2)
    norm = 1.0 / math.sqrt(1.0 + alpha * alpha)
    gamma_lambda = species.gamma_P * (species.beta_PD + alpha * alpha * species.beta_PS)
    if lasers.omega_R > 0:
        epsilon = alpha * lasers.omega_B / lasers.omega_R
    else:
        epsilon = math.inf if alpha * lasers.omega_B != 0 else 0.0
    return DressedModel(
        alpha_W=alpha,
        light_shift=alpha * lasers.omega_W / 2.0,
        s_Q_coeffs=(norm, alpha * norm),
        q_S_coeffs=(-alpha * norm, norm),
        effective_rabi_QP=-alpha * lasers.omega_B,
        gamma_Lambda=gamma_lambda,
        epsilon=epsilon,
    )


def three_photon_detuning(lasers: LaserParams, dressed: DressedModel) -> float:
    """Light-shifted three-photon detuning Delta_R + Delta_W - Delta_B + alpha_W Omega_W / 2."""
    return lasers.delta_R + lasers.delta_W - lasers.delta_B + dressed.light_shift


def dark_state(dressed: DressedModel) -> np.ndarray:
    """Normalised dark-state amplitudes over (|D>, |Q_S>)."""
    e = dressed.epsilon
    if not math.isfinite(e):
        raise DressedModelError("dark state undefined for Omega_R = 0")
    return np.array([e, 1.0]) / math.sqrt(1.0 + e * e)


def q_s_vector(dressed: DressedModel) -> np.ndarray:
    v = np.zeros(DIM)
    v[S], v[Q] = dressed.q_S_coeffs
    return v


def dark_state_vector(dressed: DressedModel) -> np.ndarray:
    """The dark state expanded on the bare (S, P, D, Q) basis."""
    c_d, c_qs = dark_state(dressed)
    v = c_qs * q_s_vector(dressed)
    v[D] += c_d
    return v


def lambda_hamiltonian(lasers: LaserParams, dressed: DressedModel) -> np.ndarray:
    """Coupling part of the effective Lambda system on (|Q_S>, |P>, |D>)."""
    h = np.zeros((3, 3))
    h[0, 1] = h[1, 0] = dressed.effective_rabi_QP / 2.0
    h[2, 1] = h[1, 2] = lasers.omega_R / 2.0
    return h


def validity_flags(lasers: LaserParams, species: IonSpecies, dressed: DressedModel,
                   threshold: float = VALIDITY_THRESHOLD) -> ValidityFlags:
    a2 = dressed.alpha_W ** 2
    return ValidityFlags(
        alpha_ratio=_ratio(1.0, a2),
        lambda_ratio=_ratio(lasers.omega_R ** 2, a2 * lasers.omega_B ** 2),
        branching_ratio=_ratio(species.beta_PD * lasers.omega_B ** 2,
                               species.beta_PS * lasers.omega_R ** 2),
        threshold=threshold,
    )


def linewidth(omega_R: float, delta_R: float, species: IonSpecies, gamma_lambda: float) -> float:
    """Power-broadened dark-line FWHM (s^-1)."""
    g = species.gamma_P
    root = math.sqrt(1.0 + (3.0 - gamma_lambda / g) * omega_R ** 2 / (g ** 2 * species.beta_PD)
                     + 4.0 * delta_R ** 2 / g ** 2)
    return omega_R ** 2 / (g * root)


def signal_rate(gamma_eff: float, omega_R: float, species: IonSpecies) -> float:
    """Per-ion fluorescence rate around the dark resonance (photons/s)."""
    return species.gamma_P * gamma_eff ** 2 / omega_R ** 2 * species.beta_PS / species.beta_PD


def analytic_linewidth(lasers: LaserParams, species: IonSpecies, dressed: DressedModel,
                       warn: bool = True) -> LineEstimate:
    if lasers.omega_R == 0:
        raise DressedModelError("Omega_R = 0: no dark line")
    flags = validity_flags(lasers, species, dressed)
    if warn and not flags.green:
        warnings.warn(f"outside the linewidth formula's validity regime: {flags.to_dict()}",
                      stacklevel=2)
    g_eff = linewidth(lasers.omega_R, lasers.delta_R, species, dressed.gamma_Lambda)
    return LineEstimate(
        gamma_eff=g_eff,
        signal_rate=signal_rate(g_eff, lasers.omega_R, species),
        center_offset=-dressed.light_shift,
        validity=flags,
    )


def rabi_for_linewidth(gamma_eff: float, species: IonSpecies, delta_R: float = 0.0,
                       alpha_W: float = 0.0) -> float:
    """Omega_R (s^-1) that power-broadens the dark line to ``gamma_eff`` (s^-1).

    Inverts the linewidth formula, which is a quadratic in Omega_R^2.
    """
    if gamma_eff <= 0:
        raise ValueError("gamma_eff must be > 0")
    g = species.gamma_P
    gl = g * (species.beta_PD + alpha_W ** 2 * species.beta_PS)
    a = (3.0 - gl / g) / (g ** 2 * species.beta_PD)
    b = 1.0 + 4.0 * delta_R ** 2 / g ** 2
    k = (gamma_eff * g) ** 2
    x = 0.5 * (k * a + math.sqrt((k * a) ** 2 + 4.0 * k * b))
    return math.sqrt(x)


def resonant_delta_W(lasers: LaserParams) -> float:
    """Delta_W that zeroes the light-shifted three-photon detuning.

    Since alpha_W Omega_W / 2 = Omega_W^2 / (4 Delta_W), the condition is a
    quadratic in Delta_W; the root continuous with the bare resonance
    Delta_B - Delta_R is returned.
    """
    c = lasers.delta_B - lasers.delta_R
    if c == 0:
        raise DressedModelError("bare resonance at Delta_W = 0; alpha_W undefined there")
    disc = c * c - lasers.omega_W ** 2
    if disc < 0:
        raise DressedModelError("no real resonance: Omega_W exceeds |Delta_B - Delta_R|")
    return 0.5 * (c + math.copysign(math.sqrt(disc), c))
