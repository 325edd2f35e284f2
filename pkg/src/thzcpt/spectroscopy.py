"""Detuning scans across the dark resonance and dip fitting."""
from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import least_squares

from .bloch import BlochError, DensityMatrix4, LaserParams, fluorescence_rate, solve_point
from .constants import TWO_PI
from .dressed import (DressedModelError, LineEstimate, analytic_linewidth, make_dressed,
                      resonant_delta_W)
from .species import IonSpecies

AXES = ("W", "B", "R")
MIN_CONTRAST = 1e-6
CSV_COLUMNS = ("detuning_Hz", "fluorescence_rate_per_ion")


class SpectroscopyError(RuntimeError):
    pass


class NoDipError(SpectroscopyError):
    pass


class FitError(SpectroscopyError):
    pass


class ScanError(SpectroscopyError):
    def __init__(self, message, detuning=None):
        self.detuning = detuning
        super().__init__(message)


@dataclass(frozen=True)
class ScanSpec:
    """One detuning sweep.

    ``scan_center`` and ``scan_span`` are angular detunings (s^-1) of the swept
    laser; the base value of that laser's detuning in ``lasers`` is ignored.
    ``two_photon_offset`` (Delta_R - Delta_B), when given, overrides Delta_R of
    the base point.  Only a W sweep keeps it fixed, so it is rejected for the
    other axes.
    """

    species: IonSpecies
    lasers: LaserParams
    scan_center: float
    scan_span: float
    n_points: int = 201
    scan_axis: str = "W"
    two_photon_offset: float | None = None

    def __post_init__(self):
        if self.scan_axis not in AXES:
            raise ValueError(f"scan_axis must be one of {AXES}, got {self.scan_axis!r}")
        if self.n_points < 11 or self.n_points % 2 == 0:
            raise ValueError(f"n_points must be odd and >= 11, got {self.n_points}")
        if not self.scan_span > 0:
            raise ValueError("scan_span must be > 0")
        if not math.isfinite(self.scan_center):
            raise ValueError("scan_center must be finite")
        if self.two_photon_offset is not None and self.scan_axis != "W":
            raise ValueError("two_photon_offset can only be held fixed in a W scan")

    @property
    def base_lasers(self) -> LaserParams:
        if self.two_photon_offset is None:
            return self.lasers
        return self.lasers.replace(delta_R=self.lasers.delta_B + self.two_photon_offset)

    @property
    def detunings(self) -> np.ndarray:
        half = self.scan_span / 2
        return np.linspace(self.scan_center - half, self.scan_center + half, self.n_points)

    def lasers_at(self, detuning: float) -> LaserParams:
        return self.base_lasers.replace(**{f"delta_{self.scan_axis}": float(detuning)})

    def bare_resonance(self) -> float:
        """Swept detuning where Delta_R + Delta_W - Delta_B = 0 ignoring the light shift."""
        las = self.base_lasers
        if self.scan_axis == "W":
            return las.delta_B - las.delta_R
        if self.scan_axis == "B":
            return las.delta_R + las.delta_W
        return las.delta_B - las.delta_W

    @classmethod
    def around_resonance(cls, species: IonSpecies, lasers: LaserParams,
                         span_linewidths: float = 10.0, n_points: int = 201,
                         two_photon_offset: float | None = None) -> "ScanSpec":
        """W sweep centred on the predicted (light-shifted) dip."""
        base = lasers
        if two_photon_offset is not None:
            base = lasers.replace(delta_R=lasers.delta_B + two_photon_offset)
        center = resonant_delta_W(base)
        at_center = base.replace(delta_W=center)
        est = analytic_linewidth(at_center, species, make_dressed(at_center, species), warn=False)
        return cls(species, lasers, center, span_linewidths * est.gamma_eff, n_points, "W",
                   two_photon_offset)


class DipFit(NamedTuple):
    center: float
    fwhm: float
    contrast: float
    residual_rms: float
    halfdepth_fwhm: float
    background: float


@dataclass(frozen=True, eq=False)
class ScanResult:
    detunings: np.ndarray
    fluorescence: np.ndarray
    fitted_center: float
    fitted_fwhm: float
    contrast: float
    fit_residual_rms: float
    halfdepth_fwhm: float
    background: float
    bare_resonance: float
    scan_axis: str
    analytic: LineEstimate | None = None
    validity_flags: dict = field(default_factory=dict)
    fit_error: str | None = None

    @property
    def dip_found(self) -> bool:
        return self.fit_error is None

    @property
    def center_offset(self) -> float:
        """Fitted dip position relative to the bare three-photon resonance (s^-1)."""
        return self.fitted_center - self.bare_resonance

    @property
    def dip_depth(self) -> float:
        """Background minus minimum fluorescence (photons/s per ion)."""
        return float(self.background - self.fluorescence.min())

    def metadata(self) -> dict:
        hz = lambda w: None if w is None or not math.isfinite(w) else w / TWO_PI  # noqa: E731
        meta = {
            "scan_axis": self.scan_axis,
            "n_points": int(self.detunings.size),
            "fitted_center_Hz": hz(self.fitted_center),
            "center_offset_Hz": hz(self.center_offset),
            "fitted_fwhm_Hz": hz(self.fitted_fwhm),
            "halfdepth_fwhm_Hz": hz(self.halfdepth_fwhm),
            "contrast": self.contrast,
            "contrast_definition": "(background - minimum) / background, background from the fit",
            "background_rate_per_ion": self.background,
            "fit_residual_rms": self.fit_residual_rms,
            "fit_error": self.fit_error,
            "validity_flags": self.validity_flags,
        }
        if self.analytic is not None:
            meta["analytic"] = {
                "gamma_eff_Hz": self.analytic.gamma_eff / TWO_PI,
                "center_offset_Hz": self.analytic.center_offset / TWO_PI,
                "signal_rate_per_ion": self.analytic.signal_rate,
            }
        return meta

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for x, y in zip(self.detunings, self.fluorescence):
                writer.writerow([repr(float(x / TWO_PI)), repr(float(y))])
        return path

    def write_sidecar(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.metadata(), indent=2, default=_json_default) + "\n")
        return path

    def save(self, csv_path: str | Path) -> tuple[Path, Path]:
        csv_path = Path(csv_path)
        return self.write_csv(csv_path), self.write_sidecar(csv_path.with_suffix(".json"))


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    raise TypeError(type(obj))


def read_scan_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read back (detuning_Hz, fluorescence) columns."""
    with Path(path).open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        rows = [(float(a), float(b)) for a, b in reader]
    arr = np.array(rows)
    return arr[:, 0], arr[:, 1]


def _lorentz_dip(x, center, fwhm, background, depth):
    hw2 = (fwhm / 2) ** 2
    return background - depth * hw2 / ((x - center) ** 2 + hw2)


def _halfdepth_width(x, y, background):
    i = int(np.argmin(y))
    half = 0.5 * (background + y[i])
    left = i
    while left > 0 and y[left] < half:
        left -= 1
    right = i
    while right < len(y) - 1 and y[right] < half:
        right += 1
    if y[left] < half or y[right] < half:
        return math.nan
    xl = np.interp(half, [y[left + 1], y[left]], [x[left + 1], x[left]])
    xr = np.interp(half, [y[right - 1], y[right]], [x[right - 1], x[right]])
    return float(xr - xl)


def fit_dip(detunings, fluorescence) -> DipFit:
    """Least-squares inverted Lorentzian on a flat background.

    The background guess comes from the outer 20 % of the points.  Returns the
    fitted centre and FWHM, the contrast depth/background, the rms residual
    (in units of the background) and a model-free FWHM read off at half depth.
    """
    x = np.asarray(detunings, dtype=float)
    y = np.asarray(fluorescence, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("detunings and fluorescence must be 1-D arrays of equal length")
    if x.size < 11:
        raise ValueError("need at least 11 points")
    n_edge = max(1, int(round(0.1 * x.size)))
    background0 = float(np.mean(np.concatenate([y[:n_edge], y[-n_edge:]])))
    if not background0 > 0:
        raise NoDipError("no dip: background fluorescence is zero")
    depth0 = background0 - float(y.min())
    if depth0 / background0 < MIN_CONTRAST:
        raise NoDipError(f"no dip: contrast {depth0 / background0:.3g} below {MIN_CONTRAST}")

    # work in scaled units so the optimiser sees O(1) numbers
    x0 = float(x[np.argmin(y)])
    xs = float(np.ptp(x)) / 2 or 1.0
    u = (x - x0) / xs
    v = y / background0
    hd = _halfdepth_width(x, y, background0)
    w0 = hd / xs if math.isfinite(hd) and hd > 0 else 0.2
    p0 = [0.0, w0, 1.0, depth0 / background0]

    def resid(p):
        return _lorentz_dip(u, *p) - v

    try:
        sol = least_squares(resid, p0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            max_nfev=20000)
    except Exception as exc:  # pragma: no cover - scipy internals
        raise FitError(f"fit diverged: {exc}") from exc
    c, w, b, d = sol.x
    w = abs(w)
    if not (sol.success and np.all(np.isfinite(sol.x)) and w > 0 and b > 0):
        raise FitError(f"fit diverged: status={sol.status}, params={sol.x.tolist()}, p0={p0}")
    center = x0 + c * xs
    if not x[0] <= center <= x[-1]:
        raise FitError(f"fit diverged: centre {center:.6g} outside scanned range")
    background = b * background0
    contrast = float(np.clip(d / b, 0.0, 1.0))
    rms = float(np.sqrt(np.mean(sol.fun ** 2)) / b)
    return DipFit(center, w * xs, contrast, rms, hd, background)


def _solve_one(spec: ScanSpec, detuning: float, rho0: DensityMatrix4) -> float:
    try:
        rho = solve_point(spec.species, spec.lasers_at(detuning), rho0)
    except (BlochError, np.linalg.LinAlgError) as exc:
        raise ScanError(f"steady-state solve failed at detuning {detuning:.9g} s^-1: {exc}",
                        detuning) from exc
    return fluorescence_rate(rho, spec.species)


def scan_spectrum(spec: ScanSpec, max_workers: int | None = None) -> ScanResult:
    """Solve the steady state at every detuning and fit the dip.

    Every point starts from |S><S| (used only when the Liouvillian kernel is
    degenerate, e.g. Omega_W = 0) and is solved independently.  A missing dip is
    reported through ``fit_error`` and the contrast field rather than raised.
    """
    las = spec.base_lasers
    if abs(las.delta_R - las.delta_B) < 0.1 * spec.species.gamma_P and spec.scan_axis == "W":
        warnings.warn("Delta_R - Delta_B is close to the two-photon resonance of the S-P-D "
                      "Lambda system; the three-photon dark line needs it detuned", stacklevel=2)

    analytic = None
    flags = {}
    centre_lasers = spec.lasers_at(spec.scan_center)
    try:
        dressed = make_dressed(centre_lasers, spec.species)
        analytic = analytic_linewidth(centre_lasers, spec.species, dressed, warn=False)
        flags = analytic.validity.to_dict()
        if spec.scan_span < 5 * analytic.gamma_eff:
            warnings.warn(f"scan span {spec.scan_span:.3g} s^-1 covers less than 5 analytic "
                          f"linewidths ({analytic.gamma_eff:.3g} s^-1)", stacklevel=2)
    except DressedModelError as exc:
        flags = {"unavailable": str(exc)}

    x = spec.detunings
    rho0 = DensityMatrix4.basis("S")
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            y = np.array(list(pool.map(lambda d: _solve_one(spec, d, rho0), x)))
    else:
        y = np.array([_solve_one(spec, d, rho0) for d in x])

    try:
        fit = fit_dip(x, y)
        return ScanResult(x, y, fit.center, fit.fwhm, fit.contrast, fit.residual_rms,
                          fit.halfdepth_fwhm, fit.background, spec.bare_resonance(),
                          spec.scan_axis, analytic, flags)
    except SpectroscopyError as exc:
        n_edge = max(1, int(round(0.1 * x.size)))
        bg = float(np.mean(np.concatenate([y[:n_edge], y[-n_edge:]])))
        contrast = float(np.clip((bg - y.min()) / bg, 0.0, 1.0)) if bg > 0 else 0.0
        return ScanResult(x, y, math.nan, math.nan, contrast, math.nan, math.nan, bg,
                          spec.bare_resonance(), spec.scan_axis, analytic, flags, str(exc))


def signal_to_noise(signal: float | ScanResult, trap) -> float:
    """Shot-noise-limited S/N = sqrt(eta N_i S / 2).

    ``signal`` is a per-ion rate in photons/s, or a :class:`ScanResult`, in
    which case its measured dip depth is used.
    """
    if not 0 < trap.eta <= 1:
        raise ValueError(f"detection efficiency must lie in (0, 1], got {trap.eta}")
    if trap.n_ions < 1:
        raise ValueError(f"need at least one ion, got n_ions={trap.n_ions}")
    rate = signal.dip_depth if isinstance(signal, ScanResult) else float(signal)
    if rate < 0:
        raise ValueError("signal rate must be >= 0")
    return math.sqrt(trap.eta * trap.n_ions * rate / 2.0)
