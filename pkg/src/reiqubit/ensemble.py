"""Dilute dopant ensembles on a simple-cubic cation lattice.

Each occupied site carries an inhomogeneous frequency offset.  In the
default ``correlated`` mode one offset ``o`` is drawn per ion and level l
is shifted by ``o * E_l / E_max`` so every transition of the ion moves by
an amount proportional to its frequency (and the top-to-bottom transition
by exactly ``o``).  ``independent`` mode draws a separate offset for every
non-ground level.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .ion_data import LevelScheme
from .phys_core import C_CGS, LATTICE_CONSTANT

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))  # 2.3548...


class EmptyEnsembleError(ValueError):
    pass


@dataclass
class CrystalConfig:
    a: float = LATTICE_CONSTANT  # m
    c: float = 0.1  # site fraction
    gamma_inh: float = 1e12  # Hz, FWHM
    gamma_h_ref: float = 1.0 / (2 * math.pi * 1.5e-3)  # Hz, lifetime-limited floor
    T_ref: float = 4.0  # K
    raman_coeff: float = 1e5  # Hz, Raman contribution at T_ref
    n: float = 1.6
    eps_r: float = 10.0
    r0_sq: float | None = None  # m^2; None -> 0.1 a^2
    distribution: str = "gaussian"  # or "uniform"
    offset_mode: str = "correlated"  # or "independent"

    def __post_init__(self):
        if self.r0_sq is None:
            self.r0_sq = 0.1 * self.a**2
        self.validate()

    def validate(self, prefix: str = "crystal"):
        checks = [
            ("a", self.a > 0, "must be > 0"),
            ("c", 0 < self.c <= 1, "must satisfy 0 < c <= 1"),
            ("gamma_inh", self.gamma_inh > 0, "must be > 0"),
            ("gamma_h_ref", self.gamma_h_ref >= 0, "must be >= 0"),
            ("T_ref", self.T_ref > 0, "must be > 0"),
            ("raman_coeff", self.raman_coeff >= 0, "must be >= 0"),
            ("n", self.n >= 1, "must be >= 1"),
            ("eps_r", self.eps_r >= 1, "must be >= 1"),
            ("r0_sq", self.r0_sq > 0, "must be > 0"),
            ("distribution", self.distribution in ("gaussian", "uniform"), "must be gaussian|uniform"),
            ("offset_mode", self.offset_mode in ("correlated", "independent"), "must be correlated|independent"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ValueError(f"{prefix}.{name} {msg} (got {getattr(self, name)!r})")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class IonSite:
    id: int
    ijk: tuple
    position: np.ndarray  # m
    offset_hz: float
    level_offsets_hz: dict = field(default_factory=dict)  # independent mode only

    def level_offsets(self, scheme: LevelScheme) -> np.ndarray:
        """Per-level frequency offsets (Hz), ordered as ``scheme.levels``."""
        levels = scheme.levels
        if self.level_offsets_hz:
            return np.array([self.level_offsets_hz.get(lv.label, 0.0) for lv in levels])
        e_max = max(lv.energy_cm1 for lv in levels)
        return np.array([self.offset_hz * lv.energy_cm1 / e_max for lv in levels])

    def level_frequencies(self, scheme: LevelScheme) -> np.ndarray:
        """Absolute level frequencies (Hz) including this site's offsets."""
        bare = np.array([lv.energy_cm1 * C_CGS for lv in scheme.levels])
        return bare + self.level_offsets(scheme)

    def transition_offset(self, scheme: LevelScheme, role_a: str, role_b: str) -> float:
        off = self.level_offsets(scheme)
        ia, ib = scheme.index(role_a), scheme.index(role_b)
        lo, hi = sorted((ia, ib), key=lambda i: scheme.levels[i].energy_cm1)
        return float(off[hi] - off[lo])


def _draw(rng, size, fwhm, distribution):
    if distribution == "gaussian":
        return rng.normal(0.0, fwhm / FWHM_PER_SIGMA, size)
    return rng.uniform(-fwhm / 2, fwhm / 2, size)


def sample_sites(config: CrystalConfig, box_edge: int, seed: int, scheme: LevelScheme | None = None) -> list:
    """Occupy each site of an edge^3 simple-cubic box with probability c.

    Sites are visited in lexicographic (i, j, k) order, so the result is a
    pure function of ``(config, box_edge, seed)``.
    """
    if box_edge < 2:
        raise ValueError("box_edge must be >= 2")
    config.validate()
    ss = np.random.SeedSequence(seed)
    occ_rng, off_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    ijk = np.array(list(itertools.product(range(box_edge), repeat=3)))
    occupied = ijk[occ_rng.random(len(ijk)) < config.c] if config.c < 1 else ijk
    if len(occupied) == 0:
        raise EmptyEnsembleError(f"no ions in a {box_edge}^3 box at c = {config.c}")
    offsets = _draw(off_rng, len(occupied), config.gamma_inh, config.distribution)
    per_level = None
    if config.offset_mode == "independent":
        if scheme is None:
            raise ValueError("independent offsets need a level scheme")
        excited = [lv.label for lv in scheme.levels if lv.energy_cm1 > 0]
        per_level = _draw(off_rng, (len(occupied), len(excited)), config.gamma_inh, config.distribution)
    sites = []
    for n, (p, o) in enumerate(zip(occupied, offsets)):
        lvl = {}
        if per_level is not None:
            lvl = dict(zip(excited, map(float, per_level[n])))
        sites.append(IonSite(n, tuple(int(v) for v in p), p * config.a, float(o), lvl))
    return sites


def mean_spacing(c_eff: float) -> float:
    """Mean distance c_eff^(-1/3) between ions, in units of a."""
    if not 0 < c_eff <= 1:
        raise ValueError(f"effective concentration must be in (0, 1], got {c_eff}")
    return c_eff ** (-1.0 / 3.0)


def ensemble_radius(N: int, c: float) -> float:
    """Size (N/c)^(1/3) of the ensemble of N nearest ions, units of a."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if not 0 < c <= 1:
        raise ValueError("c must be in (0, 1]")
    return (N / c) ** (1.0 / 3.0)


def gamma_h(config: CrystalConfig, T: float) -> float:
    """Homogeneous width: lifetime floor plus a T^7 Raman term (Hz)."""
    if T < 0:
        raise ValueError("temperature must be >= 0")
    return config.gamma_h_ref + config.raman_coeff * (T / config.T_ref) ** 7


def linewidth_from_T2(T2: float) -> float:
    """Dephasing-dominated Lorentzian FWHM 1/(pi T2)."""
    return 1.0 / (math.pi * T2)


def linewidth_from_lifetime(tau: float) -> float:
    """Lifetime-limited FWHM 1/(2 pi tau)."""
    return 1.0 / (2.0 * math.pi * tau)


def empirical_fwhm(samples, distribution: str = "gaussian") -> float:
    """FWHM of a sample estimated from its interquartile range.

    For a uniform spread the full width is twice the interquartile range.
    """
    q1, q3 = np.percentile(samples, [25, 75])
    if distribution == "uniform":
        return 2 * (q3 - q1)
    if distribution != "gaussian":
        raise ValueError(f"unknown distribution {distribution!r}")
    return (q3 - q1) / (2 * 0.6744897501960817) * FWHM_PER_SIGMA


def write_sites(path, sites: list, scheme: LevelScheme, delimiter: str = ",") -> None:
    pairs = [(a.label, b.label) for a, b in itertools.combinations(scheme.levels, 2)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(["id", "i", "j", "k", "offset_Hz"] + [f"offset_Hz_{a}-{b}" for a, b in pairs])
        for s in sites:
            off = dict(zip((lv.label for lv in scheme.levels), s.level_offsets(scheme)))
            w.writerow(
                [s.id, *s.ijk, repr(s.offset_hz)] + [repr(float(off[b] - off[a])) for a, b in pairs]
            )


def read_sites(path, scheme: LevelScheme, a: float = LATTICE_CONSTANT, delimiter: str = ",") -> list:
    """Inverse of :func:`write_sites`; transition offsets are folded back to per-level offsets."""
    ground = scheme.levels[0].label
    out = []
    with open(path, encoding="utf-8") as fh:
        for row in csv.DictReader(fh, delimiter=delimiter):
            ijk = (int(row["i"]), int(row["j"]), int(row["k"]))
            lvl = {}
            for lv in scheme.levels[1:]:
                key = f"offset_Hz_{ground}-{lv.label}"
                if key in row:
                    lvl[lv.label] = float(row[key])
            site = IonSite(int(row["id"]), ijk, np.array(ijk) * a, float(row["offset_Hz"]))
            corr = site.level_offsets(scheme)
            if not np.allclose(corr[1:], [lvl.get(lv.label, 0.0) for lv in scheme.levels[1:]], rtol=1e-12, atol=1e-6):
                site.level_offsets_hz = lvl
            out.append(site)
    return out
