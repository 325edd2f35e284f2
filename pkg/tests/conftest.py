import numpy as np
import pytest

from thzcpt.bloch import LaserParams
from thzcpt.constants import TWO_PI
from thzcpt.species import IonSpecies, get_species


@pytest.fixture
def ca():
    return get_species("Ca+")


@pytest.fixture
def two_level():
    """Toy ion whose P level decays only to S (closed two-level S-P system)."""
    return IonSpecies(name="X+", mass_u=40.0, lambda_B=400e-9, lambda_R=800e-9, lambda_W=800e-9,
                      f_QD=1e12, gamma_P=1e8, beta_PS=1.0, beta_PD=0.0, theta_Q52=1.0,
                      g_D32=0.8, g_D52=1.2)


@pytest.fixture
def demo_lasers():
    return LaserParams.from_hz(omega_B=22e6, delta_B=-67e6, omega_R=57e3, delta_R=0.0,
                               omega_W=10e3, delta_W=-67e6)


def random_hermitian(rng, n=4):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return a + a.conj().T


def random_density(rng, n=4):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def regime_lasers(species, f_R, E=0.03, detuning_B=-3.0):
    """Laser set inside the validity regime of the analytic linewidth.

    Omega_R = f_R gamma sqrt(beta_PD); Omega_B large enough for the branching
    condition with margin; alpha_W chosen so alpha_W Omega_B / Omega_R <= E.
    Delta_R = 0 and Delta_W sits at the bare resonance Delta_W = Delta_B.
    """
    g = species.gamma_P
    omega_R = f_R * g * np.sqrt(species.beta_PD)
    omega_B = max(g, 1.05 * 10 * np.sqrt(species.beta_PS / species.beta_PD) * omega_R)
    alpha = min(1e-2, E * omega_R / omega_B)
    delta_B = detuning_B * g
    return LaserParams(omega_B=omega_B, omega_R=omega_R, omega_W=2 * alpha * abs(delta_B),
                       delta_B=delta_B, delta_R=0.0, delta_W=delta_B)


__all__ = ["TWO_PI", "random_hermitian", "random_density", "regime_lasers"]
