import json
import math

import numpy as np
import pytest

from conftest import regime_lasers
from thzcpt import spectroscopy as sp
from thzcpt.bloch import BlochError, LaserParams, solve_point
from thzcpt.budget import TrapParams
from thzcpt.constants import TWO_PI
from thzcpt.dressed import analytic_linewidth, make_dressed, resonant_delta_W
from thzcpt.spectroscopy import (CSV_COLUMNS, FitError, NoDipError, ScanError, ScanSpec, fit_dip,
                                 read_scan_csv, scan_spectrum, signal_to_noise)
from thzcpt.species import get_species


def lorentz_dip(x, center, fwhm, background, contrast):
    hw = fwhm / 2
    return background * (1 - contrast * hw ** 2 / ((x - center) ** 2 + hw ** 2))


# ---------------------------------------------------------------- ScanSpec

@pytest.mark.parametrize("kw", [{"n_points": 10}, {"n_points": 9}, {"scan_span": 0.0},
                                {"scan_axis": "X"}, {"scan_axis": "B", "two_photon_offset": 1.0}])
def test_scan_spec_invariants(ca, demo_lasers, kw):
    args = dict(species=ca, lasers=demo_lasers, scan_center=0.0, scan_span=1.0)
    args.update(kw)
    with pytest.raises(ValueError):
        ScanSpec(**args)


def test_scan_grid_has_centre_sample(ca, demo_lasers):
    spec = ScanSpec(ca, demo_lasers, 3.0, 2.0, n_points=11)
    assert spec.detunings[5] == 3.0
    assert spec.detunings[0] == 2.0 and spec.detunings[-1] == 4.0


def test_two_photon_offset_and_bare_resonance(ca, demo_lasers):
    spec = ScanSpec(ca, demo_lasers, 0.0, 1.0, two_photon_offset=5.0)
    assert spec.base_lasers.delta_R == demo_lasers.delta_B + 5.0
    assert spec.bare_resonance() == -5.0
    assert spec.lasers_at(7.0).delta_W == 7.0
    b = ScanSpec(ca, demo_lasers, 0.0, 1.0, scan_axis="B")
    assert b.bare_resonance() == demo_lasers.delta_R + demo_lasers.delta_W
    r = ScanSpec(ca, demo_lasers, 0.0, 1.0, scan_axis="R")
    assert r.bare_resonance() == demo_lasers.delta_B - demo_lasers.delta_W


# ---------------------------------------------------------------- fit_dip

def test_fit_exact_lorentzian():
    x = np.linspace(-1000, 1000, 201)
    y = lorentz_dip(x, 0.0, 100.0, 1.0, 0.5)
    fit = fit_dip(x, y)
    assert fit.center == pytest.approx(0.0, abs=1e-6 * 100)
    assert fit.fwhm == pytest.approx(100.0, rel=1e-6)
    assert fit.contrast == pytest.approx(0.5, rel=1e-6)
    assert fit.background == pytest.approx(1.0, rel=1e-6)
    assert fit.residual_rms < 1e-9
    # model-free width from interpolation at half depth, coarse grid
    assert fit.halfdepth_fwhm == pytest.approx(100.0, rel=0.02)


def test_fit_is_scale_invariant():
    x = np.linspace(-1000, 1000, 201) * 1e6 + 3e9
    y = lorentz_dip(x, 3e9 + 1.2e7, 1e8, 1e-3, 0.8)
    fit = fit_dip(x, y)
    assert fit.center == pytest.approx(3e9 + 1.2e7, rel=1e-9)
    assert fit.fwhm == pytest.approx(1e8, rel=1e-6)


def test_fit_noisy_centre_over_seeds():
    x = np.linspace(-500, 500, 201)
    clean = lorentz_dip(x, 0.0, 100.0, 1.0, 0.5)
    errors = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        fit = fit_dip(x, clean + 0.01 * rng.normal(size=x.size))
        errors.append(abs(fit.center))
    assert max(errors) < 100.0 / 50


def test_flat_input_has_no_dip():
    x = np.linspace(-1, 1, 21)
    with pytest.raises(NoDipError):
        fit_dip(x, np.full_like(x, 3.0))


def test_fit_input_checks():
    with pytest.raises(ValueError):
        fit_dip(np.arange(5.0), np.ones(5))
    with pytest.raises(ValueError):
        fit_dip(np.arange(21.0), np.ones(20))


def test_fit_rejects_peak_outside_range():
    # a dip whose minimum sits at the edge cannot be located inside the scan
    x = np.linspace(0, 1, 51)
    with pytest.raises((FitError, NoDipError)):
        fit_dip(x, 1.0 - 0.5 * x)


# ---------------------------------------------------------------- scans

@pytest.fixture(scope="module")
def demo_scan():
    ca = get_species("Ca+")
    las = LaserParams.from_hz(omega_B=22e6, delta_B=-67e6, omega_R=57e3, omega_W=10e3,
                              delta_W=-67e6)
    spec = ScanSpec.around_resonance(ca, las)
    return spec, scan_spectrum(spec)


def test_demo_scan_matches_analytic(demo_scan):
    spec, res = demo_scan
    assert res.dip_found
    assert res.validity_flags["green"]
    assert res.fitted_fwhm == pytest.approx(res.analytic.gamma_eff, rel=0.2)
    assert res.contrast > 0.99
    assert res.detunings.shape == res.fluorescence.shape == (201,)


def test_fluorescence_bounds(demo_scan):
    spec, res = demo_scan
    s = spec.species
    assert np.all(res.fluorescence >= 0)
    assert np.all(res.fluorescence <= s.gamma_P * s.beta_PS)


def test_scan_is_reproducible(demo_scan):
    spec, res = demo_scan
    again = scan_spectrum(spec)
    threaded = scan_spectrum(spec, max_workers=4)
    assert np.array_equal(res.fluorescence, again.fluorescence)
    assert np.array_equal(res.fluorescence, threaded.fluorescence)
    assert res.fitted_center == again.fitted_center


def test_dip_symmetry(demo_scan):
    spec, res = demo_scan
    for frac in (0.1, 0.5, 1.0):
        x = frac * res.fitted_fwhm
        lo = solve_point(spec.species, spec.lasers_at(res.fitted_center - x))
        hi = solve_point(spec.species, spec.lasers_at(res.fitted_center + x))
        assert lo[1, 1].real == pytest.approx(hi[1, 1].real, rel=0.01)


def test_no_w_coupling_no_dip(ca):
    las = LaserParams.from_hz(omega_B=22e6, delta_B=-67e6, omega_R=57e3, delta_W=-67e6)
    spec = ScanSpec(ca, las, las.delta_W, TWO_PI * 2e3)
    res = scan_spectrum(spec)
    assert not res.dip_found
    assert res.contrast < 1e-6
    assert "no dip" in res.fit_error


def test_solver_failure_carries_detuning(ca, demo_lasers, monkeypatch):
    calls = []

    def broken(species, lasers, rho0=None):
        calls.append(lasers.delta_W)
        raise BlochError("boom")

    monkeypatch.setattr(sp, "solve_point", broken)
    spec = ScanSpec(ca, demo_lasers, -1e8, 1e4, n_points=11)
    with pytest.raises(ScanError) as info:
        scan_spectrum(spec)
    assert info.value.detuning == calls[0]


def test_narrow_span_warns(ca, demo_lasers):
    spec = ScanSpec.around_resonance(ca, demo_lasers, span_linewidths=2.0, n_points=11)
    with pytest.warns(UserWarning, match="linewidths"):
        scan_spectrum(spec)


@pytest.mark.filterwarnings("ignore:.alpha_W")
def test_lambda_resonance_warns(ca, demo_lasers):
    las = demo_lasers.replace(delta_R=demo_lasers.delta_B)
    spec = ScanSpec(ca, las, 1e6, 1e3, n_points=11)
    with pytest.warns(UserWarning, match="two-photon"):
        scan_spectrum(spec)


def test_csv_and_sidecar_roundtrip(demo_scan, tmp_path):
    _, res = demo_scan
    csv_path, json_path = res.save(tmp_path / "scan.csv")
    assert csv_path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    x_hz, y = read_scan_csv(csv_path)
    assert np.array_equal(x_hz * TWO_PI, res.detunings) or np.allclose(x_hz * TWO_PI, res.detunings,
                                                                        rtol=1e-15)
    assert np.array_equal(y, res.fluorescence)
    meta = json.loads(json_path.read_text())
    assert meta["fitted_fwhm_Hz"] == pytest.approx(res.fitted_fwhm / TWO_PI)
    assert "background" in meta["contrast_definition"]
    assert meta["validity_flags"]["green"] is True


# ---------------------------------------------------------------- S/N

def test_signal_to_noise_example():
    assert signal_to_noise(918.0, TrapParams(eta=1e-4, n_ions=1e5)) == pytest.approx(67.75, abs=0.01)


def test_signal_to_noise_scaling():
    base = signal_to_noise(500.0, TrapParams(eta=1e-4))
    assert signal_to_noise(500.0, TrapParams(eta=4e-4)) == pytest.approx(2 * base)


def test_signal_to_noise_preconditions():
    with pytest.raises(ValueError):
        signal_to_noise(1.0, TrapParams(n_ions=0))
    with pytest.raises(ValueError):
        signal_to_noise(1.0, TrapParams(eta=0.0))
    with pytest.raises(ValueError):
        signal_to_noise(-1.0, TrapParams())


def test_signal_to_noise_from_scan(demo_scan):
    _, res = demo_scan
    trap = TrapParams()
    assert signal_to_noise(res, trap) == pytest.approx(
        math.sqrt(trap.eta * trap.n_ions * res.dip_depth / 2))


@pytest.mark.parametrize("name", ["Ca+", "Sr+", "Ba+"])
@pytest.mark.parametrize("f_R", [1e-3, 1e-2, 1e-1])
def test_regime_helper_is_green(name, f_R):
    s = get_species(name)
    las = regime_lasers(s, f_R)
    at = las.replace(delta_W=resonant_delta_W(las))
    est = analytic_linewidth(at, s, make_dressed(at, s), warn=False)
    assert est.validity.green
