"""Spectral hole burning on a simulated ensemble: spectra, burns, hole-antihole pairs, selection.

Lines are Lorentzians of FWHM ``gamma_h`` centred at each ion's own
(offset) transition frequencies plus the mean-field pair shift from the
current occupation of every partner ion:

    shift_i(lo -> hi) = sum_j sum_m occ[j, m] (E_ij[hi, m] - E_ij[lo, m])

which is exact whenever partner occupations are 0 or 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .interactions import PairTable, blockade_ok, cnot_shift
from .ion_data import LevelScheme
from .pulses import EnsembleState, PulseSpec, Register, apply_pulse


@dataclass
class IonEnsemble:
    """Sites plus their pair table; list position == pair-table index."""

    sites: list
    pair_table: PairTable | None = None

    def __len__(self):
        return len(self.sites)

    def level_hz(self, scheme: LevelScheme) -> np.ndarray:
        return np.array([s.level_frequencies(scheme) for s in self.sites])


def ground_occupation(n: int, scheme: LevelScheme, role: str = "g") -> np.ndarray:
    occ = np.zeros((n, scheme.dim))
    occ[:, scheme.index(role)] = 1.0
    return occ


def isolated_offsets(widths, rng) -> np.ndarray:
    """Line positions (Hz, centred on zero) for slots of the given widths laid end to end in random order.

    Each line sits in the middle of its own slot.  A slot of width
    ``4 |shift| + 2 gap`` keeps an ion's hole and antihole closer to each
    other than to any feature of another ion.
    """
    widths = np.asarray(widths, dtype=float)
    if np.any(widths <= 0):
        raise ValueError("slot widths must be > 0")
    order = rng.permutation(len(widths))
    edges = np.concatenate(([0.0], np.cumsum(widths[order])))
    centers = np.empty(len(widths))
    centers[order] = (edges[:-1] + edges[1:]) / 2
    return centers - edges[-1] / 2


def slot_widths(shifts, gamma_h: float, gap: float = 20.0) -> np.ndarray:
    return 4 * np.abs(np.asarray(shifts, dtype=float)) + 2 * gap * gamma_h


def set_line_offsets(sites, scheme: LevelScheme, offsets, role: str = "1'") -> None:
    """Pin each site's offsets so only the level ``role`` moves, by the given amount."""
    label = scheme.roles[role].label
    for s, o in zip(sites, offsets):
        s.offset_hz = float(o)
        s.level_offsets_hz = {lv.label: (float(o) if lv.label == label else 0.0) for lv in scheme.levels}


# ---------------------------------------------------------------- spectra


@dataclass
class Spectrum:
    """Absorption on a uniform grid ``ref_hz + start + step * k`` (Hz)."""

    ref_hz: float
    start: float
    step: float
    values: np.ndarray

    @classmethod
    def empty(cls, ref_hz: float, lo: float, hi: float, step: float) -> "Spectrum":
        if not step > 0 or not hi > lo:
            raise ValueError("grid needs step > 0 and hi > lo")
        n = int(math.floor((hi - lo) / step)) + 1
        return cls(ref_hz, lo, step, np.zeros(n))

    @property
    def offsets(self) -> np.ndarray:
        return self.start + self.step * np.arange(len(self.values))

    @property
    def frequencies(self) -> np.ndarray:
        return self.ref_hz + self.offsets

    def same_grid(self, other: "Spectrum") -> bool:
        return (
            self.ref_hz == other.ref_hz
            and self.start == other.start
            and self.step == other.step
            and len(self.values) == len(other.values)
        )

    def __sub__(self, other: "Spectrum") -> "Spectrum":
        if not self.same_grid(other):
            raise ValueError("spectra are on different grids")
        return Spectrum(self.ref_hz, self.start, self.step, self.values - other.values)

    def write(self, path, delimiter: str = ",") -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"frequency_Hz{delimiter}absorption\n")
            for f, v in zip(self.frequencies, self.values):
                fh.write(f"{f:.6f}{delimiter}{v:.12g}\n")


def _transition_pairs(scheme: LevelScheme, transitions):
    """(lo, hi) level indices by energy for each requested role pair (default: all)."""
    if transitions is None:
        n = scheme.dim
        return [(a, b) for a in range(n) for b in range(a + 1, n)]
    out = []
    for ra, rb in transitions:
        ia, ib = scheme.index(ra), scheme.index(rb)
        if ia == ib:
            raise ValueError(f"transition {ra}-{rb} joins a level to itself")
        out.append((min(ia, ib), max(ia, ib)))
    return out


def level_potentials(ensemble: IonEnsemble, occupation: np.ndarray) -> np.ndarray:
    """V[i, l] = sum_j sum_m E_ij[l, m] occ[j, m] in Hz."""
    occ = np.asarray(occupation, dtype=float)
    V = np.zeros_like(occ)
    tab = ensemble.pair_table
    if tab is None:
        return V
    for (i, j), E in tab.energies.items():
        V[i] += E @ occ[j]
        V[j] += E.T @ occ[i]
    return V


def line_list(ensemble: IonEnsemble, occupation, scheme: LevelScheme, transitions=None):
    """Arrays (ion, lo, hi, center_hz, weight) of every absorption line."""
    occ = np.asarray(occupation, dtype=float)
    if occ.shape != (len(ensemble), scheme.dim):
        raise ValueError(f"occupation shape {occ.shape} != ({len(ensemble)}, {scheme.dim})")
    f = ensemble.level_hz(scheme)
    V = level_potentials(ensemble, occ)
    ions, los, his, centers, weights = [], [], [], [], []
    for lo, hi in _transition_pairs(scheme, transitions):
        for i in range(len(ensemble)):
            a, b = (lo, hi) if f[i, lo] <= f[i, hi] else (hi, lo)
            ions.append(i)
            los.append(a)
            his.append(b)
            centers.append(f[i, b] - f[i, a] + V[i, b] - V[i, a])
            weights.append(occ[i, a])
    return (np.array(ions, dtype=int), np.array(los, dtype=int), np.array(his, dtype=int),
            np.array(centers), np.array(weights))


def lorentzian(x, center, fwhm):
    """Unit-area Lorentzian; peak 2 / (pi fwhm)."""
    hw = fwhm / 2
    return hw / math.pi / ((x - center) ** 2 + hw**2)


def synth_spectrum(
    ensemble: IonEnsemble,
    occupation,
    scheme: LevelScheme,
    gamma_h: float,
    grid: Spectrum,
    transitions=None,
    tail_widths: float | None = 2000.0,
) -> Spectrum:
    """Sum of Lorentzians (FWHM gamma_h) weighted by lower-level population.

    Each line is evaluated within ``tail_widths * gamma_h`` of its centre
    (``None`` evaluates every line on the full grid).
    """
    if not gamma_h > 0:
        raise ValueError("gamma_h must be > 0")
    if grid.step > gamma_h / 5 * (1 + 1e-12):
        raise ValueError(f"grid step {grid.step:.4g} Hz is coarser than gamma_h/5 = {gamma_h / 5:.4g} Hz")
    _, _, _, centers, weights = line_list(ensemble, occupation, scheme, transitions)
    rel = centers - grid.ref_hz
    lo_edge, hi_edge = grid.start, grid.start + grid.step * (len(grid.values) - 1)
    outside = (weights > 0) & ((rel < lo_edge + 10 * gamma_h) | (rel > hi_edge - 10 * gamma_h))
    if np.any(outside):
        raise ValueError(
            f"{int(outside.sum())} line(s) lie within 10 gamma_h of the grid edge or beyond; widen the grid "
            "or restrict the transitions"
        )
    out = np.zeros_like(grid.values, dtype=float)
    x = grid.offsets
    for c, w in zip(rel, weights):
        if w == 0:
            continue
        if tail_widths is None:
            out += w * lorentzian(x, c, gamma_h)
            continue
        k0 = max(0, int(math.floor((c - tail_widths * gamma_h - grid.start) / grid.step)))
        k1 = min(len(x), int(math.ceil((c + tail_widths * gamma_h - grid.start) / grid.step)) + 1)
        out[k0:k1] += w * lorentzian(x[k0:k1], c, gamma_h)
    return Spectrum(grid.ref_hz, grid.start, grid.step, out)


def grid_for_lines(centers_hz, gamma_h: float, step: float | None = None, pad: float = 20.0) -> Spectrum:
    """Empty grid covering every centre +- pad*gamma_h, referenced to the mean centre."""
    centers_hz = np.asarray(centers_hz, dtype=float)
    step = gamma_h / 5 if step is None else step
    ref = float(np.round(np.mean(centers_hz)))
    lo = float(centers_hz.min() - ref - pad * gamma_h)
    hi = float(centers_hz.max() - ref + pad * gamma_h)
    return Spectrum.empty(ref, lo, hi, step)


# ---------------------------------------------------------------- burning


@dataclass
class BurnResult:
    occupation: np.ndarray
    burned: list  # ion ids with > 1/2 population moved
    transferred: dict  # ion id -> population moved into the upper level
    carrier_hz: float
    gamma_L: float


def burn(
    ensemble: IonEnsemble,
    nu_burn: float,
    gamma_L: float,
    scheme: LevelScheme,
    occupation=None,
    roles: tuple = ("g", "1'"),
    w_cut: float | None = None,
) -> BurnResult:
    """Drive every ion near ``nu_burn`` with a real pi pulse of width gamma_L.

    Each ion is evolved on its own (interactions between simultaneously
    burned ions are neglected during the pulse).  Ions whose nearest
    transition is outside ``w_cut`` are untouched.
    """
    occ = ground_occupation(len(ensemble), scheme) if occupation is None else np.array(occupation, dtype=float)
    pulse = PulseSpec(nu_burn, math.pi, 0.0, 1.0 / gamma_L, w_cut, roles)
    upper = scheme.index(roles[1])
    lower = scheme.index(roles[0])
    burned, moved = [], {}
    for i, site in enumerate(ensemble.sites):
        reg = Register([scheme], [site.level_frequencies(scheme)], None, [site.id])
        if not reg.addressed(pulse):
            continue
        st = EnsembleState((scheme.dim,), np.sqrt(np.clip(occ[i], 0, None)))
        out = apply_pulse(st, pulse, reg)
        pops = out.populations(0)
        hi = max(upper, lower, key=lambda l: scheme.levels[l].energy_cm1)
        moved[site.id] = float(pops[hi] - occ[i, hi])
        occ[i] = pops
        if moved[site.id] > 0.5:
            burned.append(site.id)
    return BurnResult(occ, burned, moved, nu_burn, gamma_L)


# ---------------------------------------------------------------- detection


@dataclass
class Feature:
    frequency_hz: float
    amplitude: float
    area: float


@dataclass
class HolePair:
    hole_hz: float
    antihole_hz: float
    splitting: float
    hole_area: float
    antihole_area: float
    partner: int | None = None
    true_shift: float | None = None

    def __post_init__(self):
        if not self.splitting > 0:
            raise ValueError("hole-antihole splitting must be > 0")


@dataclass
class Detection:
    pairs: list
    unmatched_holes: list = field(default_factory=list)
    unmatched_antiholes: list = field(default_factory=list)
    unresolved: list = field(default_factory=list)
    threshold: float = 0.0

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)

    def to_json(self) -> str:
        doc = {
            "threshold": self.threshold,
            "pairs": [asdict(p) for p in self.pairs],
            "unresolved": [asdict(p) for p in self.unresolved],
            "unmatched_holes": [asdict(f) for f in self.unmatched_holes],
            "unmatched_antiholes": [asdict(f) for f in self.unmatched_antiholes],
        }
        return json.dumps(doc, indent=2)


def _extrema(D, sign, thr):
    """Indices of strict local extrema of sign*D above thr (plateaus take the first point)."""
    y = sign * D
    left = np.concatenate(([-np.inf], y[:-1]))
    right = np.concatenate((y[1:], [-np.inf]))
    return np.flatnonzero((y > thr) & (y > left) & (y >= right))


def _refine(D, k):
    """Parabolic vertex offset (in grid steps) and value around index k."""
    if k == 0 or k == len(D) - 1:
        return 0.0, D[k]
    ym, y0, yp = D[k - 1], D[k], D[k + 1]
    den = ym - 2 * y0 + yp
    if den == 0:
        return 0.0, y0
    dx = 0.5 * (ym - yp) / den
    return dx, y0 - 0.25 * (ym - yp) * dx


def _region_area(D, k, step):
    """Trapezoid area around extremum k, out to a sign change or the valley before the next feature."""
    s = np.sign(D[k])
    a = k
    while a > 0 and np.sign(D[a - 1]) == s and abs(D[a - 1]) <= abs(D[a]):
        a -= 1
    b = k
    while b < len(D) - 1 and np.sign(D[b + 1]) == s and abs(D[b + 1]) <= abs(D[b]):
        b += 1
    area = float(trapezoid(D[a:b + 1], dx=step))
    # partial cells out to linearly interpolated zero crossings
    if a > 0 and np.sign(D[a - 1]) != s:
        area += 0.5 * D[a] * step * D[a] / (D[a] - D[a - 1])
    if b < len(D) - 1 and np.sign(D[b + 1]) != s:
        area += 0.5 * D[b] * step * D[b] / (D[b] - D[b + 1])
    return area


def detect_pairs(before: Spectrum, after: Spectrum, gamma_h: float, noise: float | None = None) -> Detection:
    """Hole-antihole pairs in ``after - before``, sorted by splitting (largest first).

    The feature threshold is 5x ``noise`` when given, else 1% of the
    largest |difference|.  Antiholes take the nearest still-unpaired hole;
    candidate pairs are processed by increasing distance, and equal
    distances go to the hole with larger area.
    """
    diff = after - before
    D = diff.values
    peak = float(np.max(np.abs(D))) if len(D) else 0.0
    thr = 5 * noise if noise is not None else peak / 100
    if peak == 0 or peak <= thr:
        return Detection([], threshold=thr)
    feats = {}
    for sign, name in ((-1, "hole"), (1, "anti")):
        out = []
        for k in _extrema(D, sign, thr):
            dx, val = _refine(D, k)
            f = diff.ref_hz + diff.start + diff.step * (k + dx)
            out.append(Feature(float(f), float(val), abs(_region_area(D, k, diff.step))))
        feats[name] = out
    holes, antis = feats["hole"], feats["anti"]
    cand = []
    for ai, a in enumerate(antis):
        for hi, h in enumerate(holes):
            cand.append((abs(a.frequency_hz - h.frequency_hz), -h.area, hi, ai))
    cand.sort()
    used_h, used_a, pairs, unresolved = set(), set(), [], []
    for dist, _, hi, ai in cand:
        if hi in used_h or ai in used_a:
            continue
        used_h.add(hi)
        used_a.add(ai)
        h, a = holes[hi], antis[ai]
        if dist == 0:
            unresolved.append(HolePair(h.frequency_hz, a.frequency_hz, math.ulp(1.0), h.area, a.area))
            continue
        p = HolePair(h.frequency_hz, a.frequency_hz, dist, h.area, a.area)
        (pairs if dist >= gamma_h else unresolved).append(p)
    pairs.sort(key=lambda p: (-p.splitting, p.hole_hz))
    return Detection(
        pairs,
        [h for i, h in enumerate(holes) if i not in used_h],
        [a for i, a in enumerate(antis) if i not in used_a],
        unresolved,
        thr,
    )


def attach_ground_truth(
    detection: Detection,
    ensemble: IonEnsemble,
    scheme: LevelScheme,
    before_occ,
    after_occ,
    transition: tuple = ("g", "1'"),
) -> Detection:
    """Label each pair with the ion whose unshifted line sits at the hole and its true shift.

    Simulation-only: a real measurement never sees ion identities.
    """
    ions, _, _, c0, w0 = line_list(ensemble, before_occ, scheme, [transition])
    _, _, _, c1, _ = line_list(ensemble, after_occ, scheme, [transition])
    for p in detection.pairs + detection.unresolved:
        k = int(np.argmin(np.where(w0 > 0, np.abs(c0 - p.hole_hz), np.inf)))
        p.partner = int(ensemble.sites[ions[k]].id)
        p.true_shift = float(c1[k] - c0[k])
    return detection


# ---------------------------------------------------------------- selection


class PartialRegistryError(ValueError):
    def __init__(self, msg, registry):
        super().__init__(msg)
        self.registry = registry


@dataclass
class QubitRegistry:
    ids: list
    frequencies: dict  # id -> {"lo-hi": Hz}
    margins: dict  # "i-j" -> blockade margin
    n_prime: int
    k: int = 1

    @property
    def N(self) -> int:
        return self.n_prime // self.k

    @property
    def weakest_margin(self) -> float:
        return min(self.margins.values()) if self.margins else math.inf

    def to_json(self) -> str:
        doc = {
            "ids": self.ids,
            "N": self.N,
            "N_prime": self.n_prime,
            "k": self.k,
            "weakest_margin": self.weakest_margin if self.margins else None,
            "frequencies_hz": {str(i): f for i, f in self.frequencies.items()},
            "margins": self.margins,
        }
        return json.dumps(doc, indent=2)


def select_ensemble(
    pairs,
    ensemble: IonEnsemble,
    scheme: LevelScheme,
    N: int,
    gamma_L: float,
    margin: float = 3.0,
    gamma_h: float = 0.0,
    k: int = 1,
    transition: tuple = ("g", "1'"),
) -> QubitRegistry:
    """Greedy pick by (splitting desc, id asc) under addressability and pairwise blockade.

    ``pairs`` must carry partner ids (see :func:`attach_ground_truth`).
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if any(p.partner is None for p in pairs):
        raise ValueError("selection needs partner ids on every pair")
    if len(pairs) < N:
        raise PartialRegistryError(f"only {len(pairs)} candidate pairs for N = {N}", _registry([], ensemble, scheme, {}, k))
    index = {s.id: n for n, s in enumerate(ensemble.sites)}
    f = ensemble.level_hz(scheme)
    ia, ib = scheme.index(transition[0]), scheme.index(transition[1])
    line = {s.id: abs(f[n, ib] - f[n, ia]) for n, s in enumerate(ensemble.sites)}
    tab = ensemble.pair_table
    chosen, margins = [], {}
    for p in sorted(pairs, key=lambda p: (-p.splitting, p.partner)):
        c = p.partner
        if c in chosen:
            continue
        ok, new = True, {}
        for s in chosen:
            if abs(line[c] - line[s]) <= margin * gamma_L:
                ok = False
                break
            E = tab.matrix(index[c], index[s]) if tab is not None else None
            d = min(cnot_shift(E, scheme, scheme), cnot_shift(None if E is None else E.T, scheme, scheme))
            chk = blockade_ok(d, gamma_L, gamma_h)
            if not chk:
                ok = False
                break
            new[f"{min(c, s)}-{max(c, s)}"] = chk.margin
        if ok:
            chosen.append(c)
            margins.update(new)
            if len(chosen) == N * k:
                break
    reg = _registry(chosen, ensemble, scheme, margins, k)
    if len(chosen) < N * k:
        raise PartialRegistryError(f"only {len(chosen)} of {N * k} ions satisfy addressability and blockade", reg)
    return reg


def _registry(ids, ensemble, scheme, margins, k):
    index = {s.id: n for n, s in enumerate(ensemble.sites)}
    freqs = {}
    for i in ids:
        f = ensemble.sites[index[i]].level_frequencies(scheme)
        labels = [lv.label for lv in scheme.levels]
        freqs[i] = {
            f"{labels[a]}-{labels[b]}": float(abs(f[b] - f[a]))
            for a in range(len(f)) for b in range(a + 1, len(f))
        }
    return QubitRegistry(list(ids), freqs, margins, len(ids), k)


# ---------------------------------------------------------------- synthetic experiments


def cluster_sites(n: int, c: float, rng, r_min: float = 1.0) -> np.ndarray:
    """Lattice points (units of a) of a burned ion at the origin and its n - 1 nearest occupied neighbours."""
    if n < 2:
        raise ValueError("a cluster needs at least 2 ions")
    if not 0 < c <= 1:
        raise ValueError("c must be in (0, 1]")
    edge = int(math.ceil((3 * n / (4 * math.pi * c)) ** (1 / 3) + r_min)) + 3
    ax = np.arange(-edge, edge + 1)
    g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3)
    d = np.linalg.norm(g, axis=1)
    keep = (d >= r_min) & (rng.random(len(g)) < c)
    g, d = g[keep], d[keep]
    if len(g) < n - 1:
        raise ValueError(f"only {len(g)} occupied sites found for {n - 1} neighbours")
    order = np.lexsort((g[:, 2], g[:, 1], g[:, 0], d))[: n - 1]
    return np.vstack([[0, 0, 0], g[order]])


@dataclass
class BurnExperiment:
    ensemble: IonEnsemble
    scheme: LevelScheme
    burn: BurnResult
    before: Spectrum
    after: Spectrum
    detection: Detection
    gamma_h: float
    transition: tuple


def comb_ensemble(
    n: int,
    c: float,
    seed: int,
    scheme: LevelScheme,
    gamma_h: float,
    a: float,
    eps_r: float = 10.0,
    r0_sq: float | None = None,
    model: str = "estimate",
    gap: float = 100.0,
    burned: int = 0,
) -> IonEnsemble:
    """Cluster around ion ``burned`` with spectrally isolated lines (simulation fixture)."""
    from .ensemble import IonSite
    from .interactions import pair_shift_table

    ss = np.random.SeedSequence(seed)
    pos_rng, slot_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    ijk = cluster_sites(n, c, pos_rng)
    r0_sq = 0.1 * a**2 if r0_sq is None else r0_sq
    tab = pair_shift_table(ijk * a, scheme, eps_r, r0_sq, model=model)
    sites = [IonSite(k, tuple(int(v) for v in p), p * a, 0.0) for k, p in enumerate(ijk)]
    ens = IonEnsemble(sites, tab)
    occ0 = ground_occupation(n, scheme)
    occ1 = occ0.copy()
    occ1[burned] = 0.0
    occ1[burned, scheme.index("1'")] = 1.0
    _, _, _, c0, _ = line_list(ens, occ0, scheme, [("g", "1'")])
    _, _, _, c1, _ = line_list(ens, occ1, scheme, [("g", "1'")])
    set_line_offsets(sites, scheme, isolated_offsets(slot_widths(c1 - c0, gamma_h, gap), slot_rng))
    return ens


def run_burn(
    ensemble: IonEnsemble,
    scheme: LevelScheme,
    gamma_h: float,
    gamma_L: float,
    burn_ion: int = 0,
    transition: tuple = ("g", "1'"),
    step: float | None = None,
    max_points: int = 20_000_000,
    noise: float | None = None,
) -> BurnExperiment:
    """Burn at one ion's line, synthesize before/after spectra of ``transition`` and detect pairs."""
    occ0 = ground_occupation(len(ensemble), scheme)
    f = ensemble.level_hz(scheme)
    ia, ib = scheme.index(transition[0]), scheme.index(transition[1])
    res = burn(ensemble, abs(f[burn_ion, ib] - f[burn_ion, ia]), gamma_L, scheme, occ0, transition)
    _, _, _, c0, _ = line_list(ensemble, occ0, scheme, [transition])
    _, _, _, c1, w1 = line_list(ensemble, res.occupation, scheme, [transition])
    grid = grid_for_lines(np.concatenate([c0, c1[w1 > 0]]), gamma_h, step)
    if len(grid.values) > max_points:
        raise ValueError(
            f"spectrum grid would need {len(grid.values)} points (> {max_points}); raise gamma_h or narrow the band"
        )
    before = synth_spectrum(ensemble, occ0, scheme, gamma_h, grid, [transition])
    after = synth_spectrum(ensemble, res.occupation, scheme, gamma_h, grid, [transition])
    det = detect_pairs(before, after, gamma_h, noise)
    attach_ground_truth(det, ensemble, scheme, occ0, res.occupation, transition)
    return BurnExperiment(ensemble, scheme, res, before, after, det, gamma_h, transition)
