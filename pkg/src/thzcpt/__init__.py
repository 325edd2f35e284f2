"""Three-photon coherent-population-trapping THz frequency standard.

Density-matrix simulator of the four-level N scheme, the perturbative
dressed-state line model, spectroscopy scans and the clock budget.
"""
from .bloch import (DensityMatrix4, LaserParams, build_hamiltonian, build_liouvillian,
                    fluorescence_rate, solve_point, steady_state, time_evolve)
from .budget import (ClockBudget, TrapParams, allan_deviation, full_budget, phase_matching)
from .dressed import analytic_linewidth, make_dressed
from .species import IonSpecies, builtin_species, get_species, load_species
from .spectroscopy import ScanSpec, fit_dip, scan_spectrum, signal_to_noise

__version__ = "0.1.0"

__all__ = [
    "ClockBudget", "DensityMatrix4", "IonSpecies", "LaserParams", "ScanSpec", "TrapParams",
    "allan_deviation", "analytic_linewidth", "build_hamiltonian", "build_liouvillian",
    "builtin_species", "fit_dip", "fluorescence_rate", "full_budget", "get_species",
    "load_species", "make_dressed", "phase_matching", "scan_spectrum", "signal_to_noise",
    "solve_point", "steady_state", "time_evolve",
]
