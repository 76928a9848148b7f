"""Embedded database of rare-earth level schemes and Judd-Ofelt elements.

The numbers live in ``data/*.csv`` next to this module; this file only
parses, validates and serves them.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

ROLES = ("g", "0", "1", "1'")

_ION_ALIASES = {"pr": "Pr3+", "er": "Er3+", "tm": "Tm3+"}


class NotFoundError(KeyError):
    """Raised when an ion, level, level pair or scheme is not in the database."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


def canonical_ion(name: str) -> str:
    key = name.strip().lower().replace("³⁺", "").replace("3+", "")
    return _ION_ALIASES.get(key, name)


@dataclass(frozen=True)
class Level:
    label: str
    energy_cm1: float
    lifetime_us: float
    u2_diag_sq: float

    def __post_init__(self):
        if self.energy_cm1 < 0:
            raise ValueError(f"level {self.label}: negative energy {self.energy_cm1}")
        if not self.lifetime_us > 0:
            raise ValueError(f"level {self.label}: lifetime must be > 0")
        if self.energy_cm1 == 0 and not math.isinf(self.lifetime_us):
            raise ValueError(f"ground level {self.label} must have infinite lifetime")

    @property
    def lifetime_s(self) -> float:
        return self.lifetime_us * 1e-6


@dataclass(frozen=True)
class LevelScheme:
    """One qubit scheme: role -> level assignment for a single ion species.

    ``levels`` holds the distinct levels used by the scheme sorted by energy;
    this is the per-ion basis used by the state-vector simulator.
    """

    ion: str
    scheme_id: int
    roles: dict = field(hash=False)

    def __post_init__(self):
        missing = [r for r in ROLES if r not in self.roles]
        if missing:
            raise ValueError(f"{self.ion} scheme {self.scheme_id}: missing roles {missing}")
        labels = [self.roles[r].label for r in ("0", "1", "1'")]
        if len(set(labels)) != 3:
            raise ValueError(f"{self.ion} scheme {self.scheme_id}: roles 0, 1, 1' must be distinct")
        aux = self.roles["1'"].u2_diag_sq
        for r in ("0", "1"):
            if not aux > self.roles[r].u2_diag_sq:
                raise ValueError(
                    f"{self.ion} scheme {self.scheme_id}: |U2|^2 of 1' ({aux}) must exceed "
                    f"that of role {r} ({self.roles[r].u2_diag_sq})"
                )

    @property
    def levels(self) -> tuple:
        uniq = {lv.label: lv for lv in self.roles.values()}
        return tuple(sorted(uniq.values(), key=lambda lv: lv.energy_cm1))

    @property
    def dim(self) -> int:
        return len(self.levels)

    def index(self, role_or_label: str) -> int:
        label = self.roles[role_or_label].label if role_or_label in self.roles else role_or_label
        for i, lv in enumerate(self.levels):
            if lv.label == label:
                return i
        raise NotFoundError(f"{role_or_label!r} not in {self.ion} scheme {self.scheme_id}")

    def level(self, role_or_label: str) -> Level:
        return self.levels[self.index(role_or_label)]

    @property
    def aux_below(self) -> bool:
        """True when |1'> lies below both qubit levels (the Pr/Er layout)."""
        e = self.roles["1'"].energy_cm1
        return e < self.roles["0"].energy_cm1 and e < self.roles["1"].energy_cm1

    def describe(self) -> dict:
        return {
            "ion": self.ion,
            "scheme": self.scheme_id,
            "roles": {
                r: {
                    "level": lv.label,
                    "energy_cm1": lv.energy_cm1,
                    "lifetime_us": lv.lifetime_us,
                    "u2_diag_sq": lv.u2_diag_sq,
                }
                for r, lv in self.roles.items()
            },
        }


def transition_frequency(scheme: LevelScheme, role_a: str, role_b: str) -> float:
    """|E_a - E_b| in cm^-1."""
    la, lb = scheme.level(role_a), scheme.level(role_b)
    if la.label == lb.label:
        raise ValueError(f"transition needs two distinct levels, got {role_a!r} twice")
    return abs(la.energy_cm1 - lb.energy_cm1)


def _rows(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    return list(csv.DictReader(lines))


class IonDatabase:
    """Validated in-memory copy of the level, Judd-Ofelt and scheme tables."""

    def __init__(self, levels_csv: str, jo_csv: str, schemes_csv: str):
        self._raw = (levels_csv, jo_csv, schemes_csv)
        self.energies: dict = {}
        self.u: dict = {}
        for row in _rows(levels_csv):
            self.energies[(row["ion"], row["level"])] = (
                float(row["energy_cm1"]),
                float(row["lifetime_us"]),
            )
        for row in _rows(jo_csv):
            ion, a, b = row["ion"], row["level_a"], row["level_b"]
            vals = tuple(float(row[k] or 0.0) for k in ("u2_sq", "u4_sq", "u6_sq"))
            if any(v < 0 for v in vals):
                raise ValueError(f"negative Judd-Ofelt entry for {ion} {a}-{b}")
            for key in ((ion, a, b), (ion, b, a)):
                if key in self.u and self.u[key] != vals:
                    raise ValueError(f"asymmetric Judd-Ofelt entry for {ion} {a}-{b}")
                self.u[key] = vals
        self.schemes: dict = {}
        for row in _rows(schemes_csv):
            ion, sid = row["ion"], int(row["scheme"])
            roles = {
                "g": self.level(ion, row["g"]),
                "0": self.level(ion, row["zero"]),
                "1": self.level(ion, row["one"]),
                "1'": self.level(ion, row["aux"]),
            }
            self.schemes[(ion, sid)] = LevelScheme(ion, sid, roles)

    @classmethod
    def from_package(cls) -> "IonDatabase":
        pkg = resources.files("reiqubit") / "data"
        return cls(
            (pkg / "levels.csv").read_text(encoding="utf-8"),
            (pkg / "judd_ofelt.csv").read_text(encoding="utf-8"),
            (pkg / "schemes.csv").read_text(encoding="utf-8"),
        )

    @property
    def ions(self) -> list:
        return sorted({ion for ion, _ in self.energies})

    def level(self, ion: str, label: str) -> Level:
        ion = canonical_ion(ion)
        try:
            energy, tau = self.energies[(ion, label)]
        except KeyError:
            raise NotFoundError(f"level {label!r} of {ion!r} not in database") from None
        u2 = self.u.get((ion, label, label), (0.0, 0.0, 0.0))[0]
        return Level(label, energy, tau, u2)

    def u_sq(self, ion: str, level_i: str, level_j: str) -> tuple:
        ion = canonical_ion(ion)
        try:
            return self.u[(ion, level_i, level_j)]
        except KeyError:
            raise NotFoundError(f"no Judd-Ofelt entry for {ion} {level_i}-{level_j}") from None

    def load_scheme(self, ion: str, scheme: int = 0) -> LevelScheme:
        ion = canonical_ion(ion)
        try:
            return self.schemes[(ion, int(scheme))]
        except KeyError:
            avail = ", ".join(f"{i}#{s}" for i, s in sorted(self.schemes))
            raise NotFoundError(
                f"no scheme {scheme!r} for ion {ion!r}; available: {avail}"
            ) from None

    def dump(self) -> tuple:
        """Serialize back to the three CSV texts (no comments)."""
        out = []
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ion", "level", "energy_cm1", "lifetime_us"])
        for (ion, lab), (e, tau) in self.energies.items():
            w.writerow([ion, lab, repr(e), repr(tau)])
        out.append(buf.getvalue())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ion", "level_a", "level_b", "u2_sq", "u4_sq", "u6_sq"])
        seen = set()
        for (ion, a, b), vals in self.u.items():
            if (ion, b, a) in seen:
                continue
            seen.add((ion, a, b))
            w.writerow([ion, a, b, *map(repr, vals)])
        out.append(buf.getvalue())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ion", "scheme", "g", "zero", "one", "aux"])
        for (ion, sid), sch in self.schemes.items():
            w.writerow([ion, sid] + [sch.roles[r].label for r in ROLES])
        out.append(buf.getvalue())
        return tuple(out)

    def as_dict(self) -> dict:
        return {
            "levels": [
                {"ion": ion, "level": lab, "energy_cm1": e, "lifetime_us": tau}
                for (ion, lab), (e, tau) in self.energies.items()
            ],
            "schemes": [sch.describe() for sch in self.schemes.values()],
        }


@lru_cache(maxsize=1)
def default_db() -> IonDatabase:
    return IonDatabase.from_package()


def load_scheme(ion: str, scheme: int = 0) -> LevelScheme:
    return default_db().load_scheme(ion, scheme)


def u_sq(ion: str, level_i: str, level_j: str) -> tuple:
    return default_db().u_sq(ion, level_i, level_j)
