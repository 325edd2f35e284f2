"""Command-line front end: ``thzcpt species|scan|budget|phase-match``.

Config files are JSON with every frequency in Hz; the conversion to angular
units happens once, in :func:`parse_config`.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

from .bloch import LaserParams
from .budget import (WORST_CASE_THETA, PhaseMatchInfeasible, TrapParams,
                     full_budget, reference_anchor_checks, reference_scenario,
                     phase_matching_wavelengths, residual_doppler_width)
from .constants import TWO_PI
from .dressed import DressedModelError, resonant_delta_W
from .species import IonSpecies, builtin_species, dumps_species, get_species, species_names
from .spectroscopy import ScanSpec, SpectroscopyError, scan_spectrum

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_REPRO = 4
EXIT_INFEASIBLE = 5

LASER_FIELDS = tuple(f.name for f in fields(LaserParams))
TRAP_FIELDS = tuple(f.name for f in fields(TrapParams))
SCAN_FIELDS = ("axis", "center", "span", "span_linewidths", "points", "two_photon_offset")


class ConfigError(ValueError):
    pass


@dataclass
class ScanBlock:
    axis: str = "W"
    center: float | None = None  # angular; None means "auto" (predicted dip)
    span: float | None = None  # angular
    span_linewidths: float = 10.0
    points: int = 201
    two_photon_offset: float | None = None


@dataclass
class RunConfig:
    species: IonSpecies
    lasers: LaserParams
    trap: TrapParams
    scan: ScanBlock = field(default_factory=ScanBlock)
    csv_path: str = "scan.csv"
    trap_defaults: tuple[str, ...] = ()
    theta52: float | None = None


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{path}: must be finite")
    return float(value)


def _block(doc: dict, key: str) -> dict:
    block = doc.get(key, {})
    if block is None:
        return {}
    if not isinstance(block, dict):
        raise ConfigError(f"{key}: expected an object")
    return block


def _check_keys(block: dict, allowed, path: str) -> None:
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown field (allowed: {', '.join(allowed)})")


def parse_config(doc: dict) -> RunConfig:
    """Validate a config document and convert it to module-level types."""
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object")
    _check_keys(doc, ("species", "lasers", "trap", "scan", "output", "budget"), "config")
    name = doc.get("species", "Ca+")
    try:
        species = get_species(str(name))
    except KeyError as exc:
        raise ConfigError(f"species: {exc.args[0]}") from None

    lasers_doc = _block(doc, "lasers")
    _check_keys(lasers_doc, LASER_FIELDS, "lasers")
    hz = {k: _number(v, f"lasers.{k}") for k, v in lasers_doc.items()}
    try:
        lasers = LaserParams.from_hz(**hz)
    except ValueError as exc:
        raise ConfigError(f"lasers.{str(exc).split()[0]}: {exc}") from None

    trap_doc = _block(doc, "trap")
    _check_keys(trap_doc, TRAP_FIELDS, "trap")
    try:
        trap = TrapParams(**{k: _number(v, f"trap.{k}") for k, v in trap_doc.items()})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    defaults = tuple(k for k in TRAP_FIELDS if k not in trap_doc)

    scan_doc = _block(doc, "scan")
    _check_keys(scan_doc, SCAN_FIELDS, "scan")
    scan = ScanBlock()
    if "axis" in scan_doc:
        scan.axis = str(scan_doc["axis"]).upper()
    center = scan_doc.get("center", "auto")
    if center != "auto":
        scan.center = TWO_PI * _number(center, "scan.center")
    if "span" in scan_doc:
        scan.span = TWO_PI * _number(scan_doc["span"], "scan.span")
    if "span_linewidths" in scan_doc:
        scan.span_linewidths = _number(scan_doc["span_linewidths"], "scan.span_linewidths")
    if "points" in scan_doc:
        pts = scan_doc["points"]
        if isinstance(pts, bool) or not isinstance(pts, int):
            raise ConfigError(f"scan.points: expected an integer, got {pts!r}")
        scan.points = pts
    if scan_doc.get("two_photon_offset") is not None:
        scan.two_photon_offset = TWO_PI * _number(scan_doc["two_photon_offset"],
                                                  "scan.two_photon_offset")

    out_doc = _block(doc, "output")
    _check_keys(out_doc, ("csv",), "output")
    budget_doc = _block(doc, "budget")
    _check_keys(budget_doc, ("theta52",), "budget")
    theta = budget_doc.get("theta52")
    return RunConfig(species, lasers, trap, scan, str(out_doc.get("csv", "scan.csv")), defaults,
                     None if theta is None else _number(theta, "budget.theta52"))


def demo_config_path():
    return resources.files("thzcpt").joinpath("data/ca_demo.json")


def load_config(path: str | None) -> RunConfig:
    source = demo_config_path() if path is None else Path(path)
    text = source.read_text(encoding="utf-8")  # OSError handled by the caller
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from None
    return parse_config(doc)


def build_scan_spec(cfg: RunConfig) -> ScanSpec:
    sc = cfg.scan
    if sc.axis not in ("W", "B", "R"):
        raise ConfigError(f"scan.axis: must be W, B or R, got {sc.axis!r}")
    try:
        if sc.axis == "W" and sc.center is None and sc.span is None:
            return ScanSpec.around_resonance(cfg.species, cfg.lasers, sc.span_linewidths,
                                             sc.points, sc.two_photon_offset)
        center = sc.center
        if center is None:
            if sc.axis != "W":
                raise ConfigError("scan.center: 'auto' is only available for W scans")
            base = cfg.lasers
            if sc.two_photon_offset is not None:
                base = base.replace(delta_R=base.delta_B + sc.two_photon_offset)
            center = resonant_delta_W(base)
        if sc.span is None:
            raise ConfigError("scan.span: required unless the W scan is centred automatically")
        return ScanSpec(cfg.species, cfg.lasers, center, sc.span, sc.points, sc.axis,
                        sc.two_photon_offset)
    except DressedModelError as exc:
        raise ConfigError(f"lasers: {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"scan: {exc}") from None


# ---------------------------------------------------------------- output helpers

def _emit(args, payload: dict, text: str) -> None:
    if args.format == "json":
        print(json.dumps(payload, indent=2, default=_json_default))
    else:
        print(text)


def _json_default(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _fail(code: int, message: str) -> int:
    print(f"thzcpt: {message}", file=sys.stderr)
    return code


def _pct(value: float, reference: float) -> str:
    if reference == 0 or not math.isfinite(value):
        return "n/a"
    return f"{100 * (value - reference) / reference:+.2f}%"


# ---------------------------------------------------------------- commands

def species_row(s: IonSpecies) -> str:
    nm = lambda lam: f"{lam * 1e9:.0f} nm"  # noqa: E731
    thz = format(s.f_QD / 1e12, "#.3g").rstrip(".")
    return (f"{s.name} {nm(s.lambda_B)} {nm(s.lambda_R)} {nm(s.lambda_W)} {thz} THz"
            f"  | M={s.mass_u:.3f} u  gamma_P={s.gamma_P:.4g} s^-1  beta_PS={s.beta_PS:.5g}"
            f"  beta_PD={s.beta_PD:.5g}  Theta(5/2)={s.theta_Q52:g} e a0^2"
            + ("  [level ordering differs]" if s.level_ordering_differs else ""))


def cmd_species(args) -> int:
    selected = builtin_species()
    if args.name:
        try:
            selected = [get_species(args.name)]
        except KeyError as exc:
            return _fail(EXIT_CONFIG, exc.args[0])
    if args.format == "json":
        print(dumps_species(selected))
        return EXIT_OK
    print("ion  lambda_B  lambda_R  lambda_W  f_QD")
    for s in selected:
        print(species_row(s))
    print()
    for s in selected:
        print(f"{s.name} sources: {s.source_note}")
    return EXIT_OK


def cmd_scan(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.points is not None:
            cfg.scan.points = args.points
        spec = build_scan_spec(cfg)
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot read config: {exc}")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"config error: {exc}")

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            result = scan_spectrum(spec, max_workers=args.workers)
        except SpectroscopyError as exc:
            return _fail(EXIT_SOLVER, f"solver failure: {exc}")
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    out = Path(args.out or cfg.csv_path)
    try:
        csv_path, json_path = result.save(out)
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot write output: {exc}")

    meta = result.metadata()
    meta["files"] = {"csv": str(csv_path), "sidecar": str(json_path)}
    an = result.analytic
    rows = [("quantity", "numeric", "analytic", "deviation")]
    if an is not None:
        rows.append(("FWHM [Hz]", f"{result.fitted_fwhm / TWO_PI:.6g}", f"{an.gamma_eff / TWO_PI:.6g}",
                     _pct(result.fitted_fwhm, an.gamma_eff)))
        rows.append(("centre offset [Hz]", f"{result.center_offset / TWO_PI:.6g}",
                     f"{an.center_offset / TWO_PI:.6g}", _pct(result.center_offset, an.center_offset)))
        meta["deviation"] = {
            "fwhm": (result.fitted_fwhm - an.gamma_eff) / an.gamma_eff,
            "center_offset": ((result.center_offset - an.center_offset) / an.center_offset
                              if an.center_offset else None),
        }
    rows.append(("contrast", f"{result.contrast:.6g}", "", ""))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = [f"{cfg.species.name} {spec.scan_axis}-scan, {spec.n_points} points"]
    lines += ["  " + "  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    green = result.validity_flags.get("green")
    lines.append(f"  validity flags green: {green}")
    lines.append(f"  wrote {csv_path} and {json_path}")
    _emit(args, meta, "\n".join(lines))
    if not result.dip_found:
        return _fail(EXIT_SOLVER, f"no dip: {result.fit_error}")
    return EXIT_OK


def _repro(args) -> int:
    target = args.repro
    names = species_names() if target == "all" else [target]
    first_miss = None
    report = {}
    lines = []
    for name in names:
        try:
            s = get_species(name)
        except KeyError as exc:
            return _fail(EXIT_CONFIG, exc.args[0])
        checks = reference_anchor_checks(s)
        trap, lasers = reference_scenario(s)
        budget = full_budget(s, trap, lasers, theta52=WORST_CASE_THETA)
        report[s.name] = {"budget": budget.to_dict(),
                          "checks": [dict(name=c.name, value=c.value, target=c.target,
                                          tolerance=c.tolerance, kind=c.kind, passed=c.passed,
                                          note=c.note) for c in checks]}
        lines.append(budget.to_text())
        lines += [f"  {c.describe()}" for c in checks]
        lines.append("")
        for c in checks:
            if not c.passed and first_miss is None:
                first_miss = f"{s.name} {c.name}"
    _emit(args, report, "\n".join(lines).rstrip())
    if first_miss:
        return _fail(EXIT_REPRO, f"reproduction miss: {first_miss}")
    return EXIT_OK


def cmd_budget(args) -> int:
    if args.repro:
        return _repro(args)
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot read config: {exc}")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"config error: {exc}")
    theta = args.theta52 if args.theta52 is not None else cfg.theta52
    try:
        budget = full_budget(cfg.species, cfg.trap, cfg.lasers, theta52=theta)
    except (ValueError, DressedModelError) as exc:
        return _fail(EXIT_CONFIG, f"config error: {exc}")
    if cfg.trap_defaults:
        note = "trap defaults applied for: " + ", ".join(cfg.trap_defaults)
        budget = replace(budget, header=budget.header + (note,))
    _emit(args, budget.to_dict(), budget.to_text())
    return EXIT_OK


def cmd_phase_match(args) -> int:
    if args.wavelengths:
        lam = [x * 1e-9 for x in args.wavelengths]
        label = "custom {:g}/{:g}/{:g} nm".format(*args.wavelengths)
        try:
            species = get_species(args.species)
        except KeyError as exc:
            return _fail(EXIT_CONFIG, exc.args[0])
    else:
        try:
            species = get_species(args.species)
        except KeyError as exc:
            return _fail(EXIT_CONFIG, exc.args[0])
        lam = [species.lambda_B, species.lambda_R, species.lambda_W]
        label = species.name
    try:
        geo = phase_matching_wavelengths(*lam)
    except ValueError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    if isinstance(geo, PhaseMatchInfeasible):
        _emit(args, geo.to_dict(), f"{label}: infeasible, violates {geo.violated} "
              f"(k_B={geo.k_B:.6g}, k_R={geo.k_R:.6g}, k_W={geo.k_W:.6g} m^-1)")
        return _fail(EXIT_INFEASIBLE, f"phase matching infeasible: {geo.violated}")
    eps = args.misalignment_mrad * 1e-3
    width = residual_doppler_width(geo, eps, args.temperature_K, species)
    payload = geo.to_dict()
    payload.update(misalignment_rad=eps, temperature_K=args.temperature_K,
                   residual_doppler_width_Hz=width, relative_residual=geo.residual_dk / geo.k_B)
    text = "\n".join([
        f"{label}: phase-matched geometry (k_R + k_W = k_B)",
        f"  angle R-W  = {geo.angle_RW_deg:.4f} deg",
        f"  angle B-R  = {geo.angle_BR_deg:.4f} deg",
        f"  angle B-W  = {geo.angle_BW_deg:.4f} deg",
        f"  |dk|       = {geo.residual_dk:.3g} m^-1 ({geo.residual_dk / geo.k_B:.2g} of k_B)",
        f"  residual Doppler width = {width:.4g} Hz "
        f"(W tilted {args.misalignment_mrad:g} mrad, T = {args.temperature_K:g} K, M = {species.mass_u:.3f} u)",
    ])
    _emit(args, payload, text)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thzcpt",
        description="Three-photon dark-line THz clock: species data, spectroscopy scans, "
                    "clock budget and beam geometry.",
        epilog="exit codes: 0 ok, 1 I/O error, 2 config error, 3 solver failure or no dip, "
               "4 reproduction miss, 5 phase matching infeasible")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--format", choices=("text", "json"), default="text")
        return p

    p = common(sub.add_parser("species", help="list built-in ion species"))
    p.add_argument("--name", help="show one species only")
    p.set_defaults(func=cmd_species)

    trap_help = ", ".join(f"{f.name}={f.default:g}" for f in fields(TrapParams))
    p = common(sub.add_parser(
        "scan", help="steady-state fluorescence scan across the dark line",
        description="Without --config the shipped Ca+ demo configuration is used."))
    p.add_argument("--config", help="JSON run config (frequencies in Hz)")
    p.add_argument("--points", type=int, help="number of scan points (odd, >= 11)")
    p.add_argument("--out", help="CSV output path; the JSON sidecar gets the .json suffix")
    p.add_argument("--workers", type=int, default=None, help="parallel solver threads")
    p.set_defaults(func=cmd_scan)

    p = common(sub.add_parser(
        "budget", help="itemised systematic shifts and stability",
        description=f"Missing trap fields take the defaults {trap_help}. Without --config "
                    "the shipped Ca+ demo configuration is used."))
    p.add_argument("--config", help="JSON run config (frequencies in Hz)")
    p.add_argument("--paper-repro", dest="repro", nargs="?", const="all", metavar="SPECIES",
                   help="run the reference scenario for one species (or all) and check the "
                        "anchor values; exits 4 on any miss")
    p.add_argument("--theta52", type=float, help="override the D5/2 quadrupole moment (e a0^2)")
    p.set_defaults(func=cmd_budget)

    p = common(sub.add_parser("phase-match", help="Doppler-free beam geometry"))
    p.add_argument("species", nargs="?", default="Ca+")
    p.add_argument("--wavelengths", nargs=3, type=float, metavar=("B", "R", "W"),
                   help="custom vacuum wavelengths in nm (mass taken from the species)")
    p.add_argument("--misalignment-mrad", type=float, default=1.0)
    p.add_argument("--temperature-K", type=float, default=1e-3)
    p.set_defaults(func=cmd_phase_match)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
