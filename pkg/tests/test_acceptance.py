"""Acceptance suite: one PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -v -s`` (or ``python tests/test_acceptance.py``)
to see the report lines.
"""
import math
import time

import numpy as np
import pytest

from conftest import random_hermitian, regime_lasers
from thzcpt.bloch import (P, DensityMatrix4, LaserParams, build_hamiltonian, build_liouvillian,
                          solve_point, steady_state, time_evolve)
from thzcpt.budget import (BeamGeometry, TrapParams, allan_deviation, bbr_stark_shift,
                           clock_quadrupole_shift, doppler2_shift, phase_matching,
                           phase_matching_wavelengths, quadrupole_shift, stability_chain,
                           zeeman_shift)
from thzcpt.constants import TWO_PI
from thzcpt.dressed import (analytic_linewidth, dark_state_vector, make_dressed,
                            rabi_for_linewidth, resonant_delta_W)
from thzcpt.spectroscopy import ScanSpec, scan_spectrum
from thzcpt.species import get_species

QUOTED_SIGMA = {"Ca+": 8e-14, "Sr+": 2e-14, "Ba+": 1e-14}


def report(number, title, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}"
    if detail:
        line += f" -- {detail}"
    print("\n" + line)
    assert ok, line


def test_criterion_1_doppler_anchor():
    trap = TrapParams(n_ions=1e5, secular_freq_MHz=0.1)
    ca = get_species("Ca+")
    frac = doppler2_shift(trap, ca)
    ok = abs(frac / -1.2e-12 - 1) <= 0.05 and abs(frac * 1.82e12 / -2.2 - 1) <= 0.05
    report(1, "second-order Doppler anchor", ok,
           f"fractional {frac:.4g}, shift {frac * 1.82e12:.4g} Hz")


def test_criterion_2_quadrupole_anchor():
    shift = clock_quadrupole_shift(4.0, 150.0)
    sums = [sum(quadrupole_shift(J, m, 4.0, 150.0) for m in np.arange(-J, J + 1))
            for J in (1.5, 2.5)]
    exact = [sum(J * (J + 1) - 3 * m * m for m in np.arange(-J, J + 1)) for J in (1.5, 2.5)]
    ok = abs(shift - 1.0) <= 0.15 and all(abs(s) < 1e-12 for s in sums) and exact == [0, 0]
    report(2, "quadrupole anchor and m-sum rule", ok,
           f"{shift:.4g} Hz, m-sums {sums[0]:.2g} / {sums[1]:.2g}")


def test_criterion_3_zeeman_anchors():
    z = zeeman_shift(2e-3, get_species("Ca+"), 3.6e-6)
    ok = abs(z.splitting_Hz / 1e3 - 1) <= 0.15 and abs(z.cancellation_residual_Hz - 1) <= 0.15
    report(3, "Zeeman anchors", ok,
           f"splitting {z.splitting_Hz:.4g} Hz, residual {z.cancellation_residual_Hz:.4g} Hz")


def test_criterion_4_stark_anchor():
    shift = bbr_stark_shift(300.0)
    formula = (831.9 / 100) ** 2 * 1e-5
    ok = shift < 0.01 and abs(shift / formula - 1) <= 0.01
    report(4, "blackbody Stark anchor", ok, f"{shift:.4g} Hz")


def test_criterion_5_stability_anchors():
    """Gamma_eff = 2 pi x 10 s^-1 with Delta_R = 0; the Rabi frequency comes from
    inverting the linewidth formula, then signal rate -> S/N -> sigma_y."""
    trap = TrapParams(n_ions=1e5, eta=1e-4, cycle_time_s=1.0)
    g_eff = TWO_PI * 10
    parts, ok = [], True
    for name, target in QUOTED_SIGMA.items():
        s = get_species(name)
        chain = stability_chain(s, trap, g_eff, rabi_for_linewidth(g_eff, s), tau=1.0)
        sigma = chain["sigma_y"]
        # each link agrees with the formula evaluated by hand
        snr = math.sqrt(1e-4 * 1e5 * chain["signal_rate"] / 2)
        assert chain["signal_to_noise"] == pytest.approx(snr)
        assert sigma == pytest.approx(g_eff / (TWO_PI * s.f_QD) / snr)
        dev = sigma / target - 1
        ok &= abs(dev) <= 0.25
        parts.append(f"{name} {sigma:.3g} vs {target:.0e} ({dev:+.1%})")
    report(5, "stability anchors within 25%", ok, "; ".join(parts))


def _regime_sets():
    return [(name, f) for name in ("Ca+", "Sr+", "Ba+") for f in (1e-3, 1e-2, 1e-1)]


def test_criterion_6_oracle_equivalence():
    """Nine parameter sets, all validity flags green, Delta_R = 0, no dephasing.

    Delta_B = -3 gamma so that Delta_R - Delta_B = 3 gamma keeps the S-P-D
    system off its two-photon resonance; the W scan spans ten analytic
    linewidths around the predicted dip with 201 points.
    """
    t0 = time.perf_counter()
    lines, ok = [], True
    for name, f_R in _regime_sets():
        s = get_species(name)
        las = regime_lasers(s, f_R)
        spec = ScanSpec.around_resonance(s, las, span_linewidths=10, n_points=201)
        res = scan_spectrum(spec)
        an = res.analytic
        width_dev = res.fitted_fwhm / an.gamma_eff - 1
        shift = an.center_offset
        centre_dev = (res.center_offset - shift) / abs(shift)
        good = (res.validity_flags["green"] and res.dip_found and abs(width_dev) <= 0.2
                and abs(centre_dev) <= 0.05)
        ok &= good
        lines.append(f"{name} f_R={f_R:g}: width {width_dev:+.1%}, centre {centre_dev:+.2%} "
                     f"of light shift {'ok' if good else 'MISS'}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120
    print("\n  " + "\n  ".join(lines))
    report(6, "numeric dip vs analytic width and light shift (9 sets)", ok, f"{elapsed:.1f} s")


def test_criterion_7_dark_state():
    worst_fid, worst_ratio = 1.0, math.inf
    for name, f_R in _regime_sets():
        s = get_species(name)
        las = regime_lasers(s, f_R)
        las = las.replace(delta_W=resonant_delta_W(las))
        d = make_dressed(las, s)
        assert abs(d.alpha_W) <= 1e-2
        on = solve_point(s, las)
        fid = on.expectation(dark_state_vector(d))
        g_eff = analytic_linewidth(las, s, d, warn=False).gamma_eff
        off = solve_point(s, las.replace(delta_W=las.delta_W + 100 * g_eff))
        ratio = off[P, P].real / max(on[P, P].real, 1e-300)
        worst_fid, worst_ratio = min(worst_fid, fid), min(worst_ratio, ratio)
    ok = worst_fid >= 0.99 and worst_ratio >= 1e3
    report(7, "dark-state fidelity and P suppression", ok,
           f"min fidelity {worst_fid:.6f}, min off/on rho_PP {worst_ratio:.3g}")


def test_criterion_8_phase_matching():
    geo = phase_matching(get_species("Ca+"))
    ok = isinstance(geo, BeamGeometry) and geo.residual_dk < 1e-12 * geo.k_B
    rng = np.random.default_rng(8)
    mismatches = 0
    checked = 0
    while checked < 1000:
        lam = rng.uniform(100e-9, 5e-6, size=3)
        kB, kR, kW = 1 / lam
        margin = min(kR + kW - kB, kB - abs(kR - kW))
        if abs(margin) < 1e-9 * kB:
            continue
        checked += 1
        res = phase_matching_wavelengths(*lam)
        feasible = isinstance(res, BeamGeometry)
        if feasible != (margin > 0):
            mismatches += 1
        elif feasible and res.residual_dk >= 1e-12 * res.k_B:
            mismatches += 1
    ok &= mismatches == 0
    report(8, "phase matching", ok,
           f"Ca+ R-W angle {geo.angle_RW_deg:.3f} deg, |dk|/k_B {geo.residual_dk / geo.k_B:.1e}, "
           f"{mismatches} mismatches in {checked} random triples")


def test_criterion_9_structural_invariants():
    ca = get_species("Ca+")
    rng = np.random.default_rng(9)
    # density-matrix invariants after every solve
    bad_solves = 0
    for _ in range(50):
        las = LaserParams(omega_B=rng.uniform(1e6, 3e8), omega_R=rng.uniform(1e4, 1e8),
                          omega_W=rng.uniform(0, 1e6), delta_B=rng.uniform(-1e9, 1e9),
                          delta_R=rng.uniform(-1e9, 1e9), delta_W=rng.uniform(-1e9, 1e9),
                          dephase_B=rng.uniform(0, 1e4), dephase_R=rng.uniform(0, 1e4),
                          dephase_W=rng.uniform(0, 1e4))
        L = build_liouvillian(build_hamiltonian(las), ca, las)
        rho = steady_state(L, DensityMatrix4.basis("S"))
        evolved = time_evolve(DensityMatrix4.basis("S"), L, 1e-6, dt_max=1e-7)
        bad_solves += bool(rho.invariant_violations()) + bool(evolved.invariant_violations())
    # trace preservation on 100 random Hermitian inputs
    las = LaserParams(omega_B=1e8, omega_R=1e7, omega_W=1e5, delta_B=-3e8, delta_W=-3e8,
                      dephase_B=100.0, dephase_R=10.0, dephase_W=1.0)
    L = build_liouvillian(build_hamiltonian(las), ca, las, include_metastable_decay=True)
    worst_trace = max(abs(np.trace(L.apply(h))) / (np.abs(L.matrix).max() * np.abs(h).max())
                      for h in (random_hermitian(rng) for _ in range(100)))
    # Allan square-root laws, exact
    base = allan_deviation(TWO_PI * 10, 1.82e12, 67.8, 1.0, 1.0)
    exact = (allan_deviation(TWO_PI * 10, 1.82e12, 67.8, 1.0, 4.0) == base / 2
             and allan_deviation(TWO_PI * 10, 1.82e12, 67.8, 4.0, 1.0) == 2 * base)
    ok = bad_solves == 0 and worst_trace < 1e-10 and exact
    report(9, "structural invariants", ok,
           f"{bad_solves} invariant violations, worst relative trace {worst_trace:.1e}, "
           f"Allan scaling exact: {exact}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
