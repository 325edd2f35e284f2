"""Per-ion atomic constants.

The numbers live in ``data/species.json`` together with a citation for every
value that does not come from the wavelength/frequency table; nothing here
hard-codes them.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path

SCHEMA = "thzcpt.species/1"

# relative ratio of the 5/2 and 3/2 quadrupole moments for pure d orbitals
THETA_32_OVER_52 = 0.7


class SpeciesError(ValueError):
    pass


@dataclass(frozen=True)
class IonSpecies:
    """Constants of one ion.

    Wavelengths are vacuum wavelengths in metres, ``f_QD`` is the D3/2-D5/2
    clock frequency in Hz, ``gamma_P`` the angular decay rate of the P1/2
    level in s^-1 and ``theta_Q52`` the D5/2 quadrupole moment in e a0^2.
    """

    name: str
    mass_u: float
    lambda_B: float
    lambda_R: float
    lambda_W: float
    f_QD: float
    gamma_P: float
    beta_PS: float
    beta_PD: float
    theta_Q52: float
    g_D32: float
    g_D52: float
    offres_shift_bound_Hz: float = 0.1
    level_ordering_differs: bool = False
    source_note: str = ""

    def __post_init__(self):
        for attr in ("mass_u", "lambda_B", "lambda_R", "lambda_W", "f_QD", "gamma_P"):
            value = getattr(self, attr)
            if not (math.isfinite(value) and value > 0):
                raise SpeciesError(f"{self.name}: {attr} must be finite and > 0, got {value!r}")
        for attr in ("beta_PS", "beta_PD"):
            value = getattr(self, attr)
            if not 0.0 <= value <= 1.0:
                raise SpeciesError(f"{self.name}: {attr} must lie in [0, 1], got {value!r}")
        if self.beta_PS + self.beta_PD != 1.0:
            raise SpeciesError(
                f"{self.name}: beta_PS + beta_PD must equal 1, got {self.beta_PS + self.beta_PD!r}"
            )
        if self.offres_shift_bound_Hz < 0:
            raise SpeciesError(f"{self.name}: offres_shift_bound_Hz must be >= 0")

    @property
    def theta_Q32(self) -> float:
        return theta_Q32(self)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, record: dict) -> "IonSpecies":
        known = {f.name for f in fields(cls)}
        unknown = set(record) - known
        if unknown:
            raise SpeciesError(f"unknown species field(s): {sorted(unknown)}")
        try:
            return cls(**record)
        except TypeError as exc:
            raise SpeciesError(str(exc)) from None


def theta_Q32(species: IonSpecies) -> float:
    """Quadrupole moment of D3/2 from the D5/2 value (pure d-orbital scaling)."""
    return THETA_32_OVER_52 * species.theta_Q52


def _default_path():
    return resources.files("thzcpt").joinpath("data/species.json")


def load_species(path: str | Path | None = None) -> list[IonSpecies]:
    """Read a species data file (the packaged one by default)."""
    source = _default_path() if path is None else Path(path)
    doc = json.loads(source.read_text(encoding="utf-8"))
    if isinstance(doc, dict):
        records = doc.get("species")
        if records is None:
            raise SpeciesError("species file has no 'species' list")
    else:
        records = doc
    out = [IonSpecies.from_dict(r) for r in records]
    names = [s.name for s in out]
    if len(set(names)) != len(names):
        raise SpeciesError(f"duplicate species names in {source}")
    return out


def dumps_species(species: list[IonSpecies]) -> str:
    doc = {"schema": SCHEMA, "species": [s.to_dict() for s in species]}
    return json.dumps(doc, indent=2)


def save_species(species: list[IonSpecies], path: str | Path) -> None:
    Path(path).write_text(dumps_species(species) + "\n", encoding="utf-8")


_BUILTIN: list[IonSpecies] | None = None


def builtin_species() -> list[IonSpecies]:
    global _BUILTIN
    if _BUILTIN is None:
        _BUILTIN = load_species()
    return list(_BUILTIN)


def _normalise(name: str) -> str:
    key = name.strip().lower().rstrip("+")
    return key


def species_names() -> list[str]:
    return [s.name for s in builtin_species()]


def get_species(name: str) -> IonSpecies:
    """Look up a built-in ion by name; ``"ca"``, ``"Ca"`` and ``"Ca+"`` all work."""
    key = _normalise(name)
    for s in builtin_species():
        if _normalise(s.name) == key:
            return s
    raise KeyError(f"unknown species {name!r}; valid names: {', '.join(species_names())}")
