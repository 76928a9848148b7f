"""Closed-form and simulation checks of the headline numbers, with the quoted figures side by side.

Each ``check_*`` returns a :class:`Check`; ``run_all`` runs them in order.
Rows carry the artifact's value, the quoted value (when there is one) and
their ratio, so loose order-of-magnitude arithmetic stays visible.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, stats

from . import hole_burning as hb
from .ensemble import IonSite, ensemble_radius, mean_spacing
from .interactions import (
    OMEGA0_BAR,
    StaticMoments,
    blockade_only_table,
    dipole_shift_estimate,
    dipole_shift_full,
    quad_energy_tensor,
    quad_shift_estimate,
    quad_shift_full,
)
from .ion_data import load_scheme
from .phys_core import C, LATTICE_CONSTANT, wave_number
from .protocols import cnot_plan, gate_fidelity, hadamard_readout_state, ideal_controlled_not, plan_simulator
from .pulses import (
    EnsembleState,
    PulseSpec,
    Register,
    apply_decay,
    apply_pulse,
    pi_pulse_field,
    pi_pulse_field_from_dipole,
    power_density,
    rabi_bound,
    single_qubit_unitary,
)

A = LATTICE_CONSTANT
BAND = (0.01, 100.0)


@dataclass
class Check:
    id: int
    name: str
    passed: bool
    rows: list = field(default_factory=list)
    detail: str = ""
    runtime_s: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.id:>2} {self.name}: {self.detail}"


def _row(quantity, value, unit="", paper=None, lo=None, hi=None):
    r = {"quantity": quantity, "value": float(value), "unit": unit}
    if paper is not None:
        r["paper"] = paper
        r["ratio"] = float(value) / paper if paper else None
    if lo is not None:
        r["range"] = [lo, hi]
    return r


def _timed(fn):
    def wrap(*a, **kw):
        t0 = time.perf_counter()
        chk = fn(*a, **kw)
        chk.runtime_s = time.perf_counter() - t0
        return chk

    wrap.__name__ = fn.__name__
    wrap.__doc__ = fn.__doc__
    return wrap


# ------------------------------------------------------------------ 1


@_timed
def check_pi_pulse_field() -> Check:
    k = wave_number(20469, 1.6)
    E = pi_pulse_field(1e9, k, 1.8e4)
    E2 = pi_pulse_field_from_dipole(1e9, k, 1.8e4)
    P = power_density(E) / 1e6
    agree = abs(E - E2) / E
    ok = 2.0e4 <= E <= 3.5e4 and 1.3 <= P <= 3.0 and agree <= 1e-12
    rows = [
        _row("pi-pulse field", E, "V/cm", 3e4, 2.0e4, 3.5e4),
        _row("power density", P, "MW/cm^2", 2.0, 1.3, 3.0),
        _row("two-form relative difference", agree, ""),
    ]
    return Check(1, "pi-pulse field", ok, rows, f"E = {E:.4g} V/cm, I = {P:.3g} MW/cm^2, forms differ by {agree:.1e}")


# ------------------------------------------------------------------ 2


def paper_prefactors(n: float = 1.6):
    """Dipole (Hz a^3) and quadrupole (Hz a^5) prefactors at the quoted generic parameters."""
    k = OMEGA0_BAR * n / C
    A_d = dipole_shift_estimate(1e4, 10.0, 1.0, k, A)
    A_q = quad_shift_estimate(0.1, OMEGA0_BAR, 0.1 * A**2, 10.0, A)
    return A_d, A_q, k


@_timed
def check_power_laws() -> Check:
    A_d, A_q, k = paper_prefactors()
    R = np.linspace(2, 100, 200) * A
    m = StaticMoments((1e-11, 0, 0), (2e-21, -1e-21, -1e-21))
    dd = np.array([dipole_shift_estimate(1e4, 10, 1, k, r) * (r / A) ** 3 for r in R])
    qq = np.array([quad_shift_estimate(0.1, OMEGA0_BAR, 0.1 * A**2, 10, r) * (r / A) ** 5 for r in R])
    fd = np.array([dipole_shift_full(m, m, r, 10) * r**3 for r in R])
    fq = np.array([quad_shift_full(m, m, r, 10) * r**5 for r in R])
    spread = max(float(np.ptp(v) / abs(np.mean(v))) for v in (dd, qq, fd, fq))
    r_star = math.sqrt(A_q / A_d)
    f = lambda x: A_q / x**5 - A_d / x**3  # noqa: E731
    r_bis = optimize.bisect(f, r_star / 10, r_star * 10, xtol=1e-15, rtol=1e-15, maxiter=500)
    dev = abs(r_bis - r_star) / r_star
    ok = spread <= 1e-12 and dev <= 1e-9
    rows = [
        _row("max relative spread of delta*R^p", spread),
        _row("crossover R* (closed form)", r_star, "a"),
        _row("crossover R* (bisection)", r_bis, "a"),
        _row("crossover R* (quoted prefactors)", math.sqrt(50e12 / 100e9), "a"),
    ]
    return Check(2, "power-law exactness", ok, rows, f"spread {spread:.1e}, R* = {r_star:.6g}a, bisection dev {dev:.1e}")


# ------------------------------------------------------------------ 3


def _random_moments(rng, iso: bool):
    if iso:
        v = rng.normal() * 1e-21
        return StaticMoments((0, 0, 0), (v, v, v))
    return StaticMoments((0, 0, 0), tuple(rng.normal(size=3) * 1e-21))


@_timed
def check_isotropy_null(n: int = 1000, seed: int = 3) -> Check:
    """Pair-frame bracket with an isotropic side; the general tensor form is reported alongside."""
    rng = np.random.default_rng(seed)
    worst, worst_t = 0.0, 0.0
    for _ in range(n):
        side = rng.integers(3)  # 0: ion 1 isotropic, 1: ion 2, 2: both
        m1 = _random_moments(rng, side in (0, 2))
        m2 = _random_moments(rng, side in (1, 2))
        ref = abs(quad_shift_full(_random_moments(rng, False), _random_moments(rng, False), 5 * A, 10))
        R = rng.uniform(2, 20) * A
        ref *= (5 * A / R) ** 5
        worst = max(worst, abs(quad_shift_full(m1, m2, R, 10)) / ref)
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        worst_t = max(worst_t, abs(quad_energy_tensor(np.diag(m1.second), np.diag(m2.second), u * R, 10)) / ref)
    ok = worst < 1e-15
    rows = [
        _row("max |delta_q| / reference (pair frame)", worst, "", lo=0, hi=1e-15),
        _row("max |delta_q| / reference (tensor form, random axis)", worst_t),
    ]
    return Check(3, "quadrupole isotropy null", ok, rows,
                 f"{n} random sets, worst ratio {worst:.1e} (tensor form {worst_t:.1e})")


# ------------------------------------------------------------------ 4


@_timed
def check_ensemble_arithmetic() -> Check:
    s = mean_spacing(1e-4)
    r = ensemble_radius(50, 0.1)
    ok = f"{s:.4g}" == "21.54" and f"{r:.3g}" == "7.94"
    rows = [_row("mean spacing at c_eff = 1e-4", s, "a", 22.0), _row("ensemble size N=50, c=0.1", r, "a", 7.9)]
    return Check(4, "ensemble arithmetic", ok, rows, f"{s:.4g}a (quoted ~22a), {r:.3g}a (quoted 7.9a)")


# ------------------------------------------------------------------ 5


def two_ion_register(delta_hz: float, scheme_id: int = 1, spacing: float = 50e9) -> Register:
    sch = load_scheme("Tm", scheme_id)
    sites = [IonSite(0, (0, 0, 0), np.zeros(3), 0.0), IonSite(1, (3, 0, 0), np.array([3 * A, 0, 0]), spacing)]
    return Register.from_sites(sites, sch, blockade_only_table(2, sch, delta_hz))


@_timed
def check_cnot_truth_table(gamma_L: float = 1e9) -> Check:
    basis = ("00", "01", "10", "11")
    reg = two_ion_register(30 * gamma_L)
    plan = cnot_plan(0, 1, reg, gamma_L)
    U = ideal_controlled_not(1)
    off = gate_fidelity(plan_simulator(plan, reg, decay=False), U)
    on = gate_fidelity(plan_simulator(plan, reg, decay=True), U)
    reg0 = two_ion_register(0.0)
    plan0 = cnot_plan(0, 1, reg0, gamma_L, enforce_blockade=False)
    zero = gate_fidelity(plan_simulator(plan0, reg0, decay=False), U)
    f_min = min(off.fidelities[b] for b in basis)
    degr = max(off.fidelities[b] - on.fidelities[b] for b in off.fidelities)
    ok = f_min >= 0.95 and zero.fidelities["00"] <= 0.1 and degr < 1e-3
    rows = [_row(f"fidelity |{b}> (delta = 30 Gamma_L)", off.fidelities[b], "", lo=0.95, hi=1.0) for b in basis]
    rows += [
        _row("fidelity |00> (delta = 0)", zero.fidelities["00"], "", lo=0.0, hi=0.1),
        _row("max decay-induced degradation", degr, "", lo=0.0, hi=1e-3),
    ]
    rows += [_row(f"residual phase |{b}>", off.phases[b], "rad") for b in basis]
    return Check(5, "CNOT truth table from dynamics", ok, rows,
                 f"min basis fidelity {f_min:.6f}, delta=0 |00> {zero.fidelities['00']:.2e}, decay loss {degr:.1e}")


# ------------------------------------------------------------------ 6


def blockaded_transfer(ratio: float, gamma_L: float = 1e9) -> tuple:
    """Transfer on the target's 0 -> 1' line with the partner parked in 1'."""
    reg = two_ion_register(ratio * gamma_L)
    sch = reg.schemes[0]
    st = EnsembleState.basis(reg.dims, [sch.index("1'"), sch.index("0")])
    p = PulseSpec(reg.transition_hz(1, "0", "1'"), math.pi, 0.0, 1 / gamma_L, None, ("0", "1'"), 1)
    out = apply_pulse(st, p, reg)
    moved = float(out.populations(1)[sch.index("1'")])
    return moved, rabi_bound(p.omega, 2 * math.pi * ratio * gamma_L)


@_timed
def check_blockade_bound() -> Check:
    rows, ok, last = [], True, math.inf
    for r in (3, 10, 30, 100):
        moved, bound = blockaded_transfer(r)
        ok &= moved <= bound and moved < last
        last = moved
        rows.append(_row(f"transfer at delta = {r} Gamma_L", moved, "", lo=0.0, hi=bound))
    return Check(6, "blockade leakage bound", bool(ok), rows,
                 "transfers " + ", ".join(f"{row['value']:.2e}" for row in rows))


# ------------------------------------------------------------------ 7


def independent_shift(ens, scheme, i, burned, transition=("g", "1'")):
    """Change of ion i's line when ``burned`` moves g -> 1', straight from the pair-table matrix."""
    E = ens.pair_table.matrix(i, burned)
    lo, hi = sorted((scheme.index(transition[0]), scheme.index(transition[1])),
                    key=lambda l: scheme.levels[l].energy_cm1)
    g, aux = scheme.index("g"), scheme.index("1'")
    return (E[hi, aux] - E[lo, aux]) - (E[hi, g] - E[lo, g])


@_timed
def check_hole_burning(seed: int = 0, gamma_h: float = 0.5e9, gamma_L: float = 1e9, N: int = 50) -> Check:
    sch = load_scheme("Tm", 2)
    ens = hb.comb_ensemble(200, 0.1, seed, sch, gamma_h, A)
    ex = hb.run_burn(ens, sch, gamma_h, gamma_L)
    det = ex.detection
    truth = {p.partner: abs(independent_shift(ens, sch, p.partner, 0)) for p in det.pairs}
    err = max(abs(p.splitting - truth[p.partner]) for p in det.pairs)
    pos = np.array([s.position for s in ens.sites]) / A
    R = {p.partner: float(np.linalg.norm(pos[p.partner])) for p in det.pairs}
    shell = {}
    for p in det.pairs:
        shell.setdefault(round(R[p.partner] ** 2), []).append(p.splitting)
    keys = sorted(shell)
    means = [float(np.mean(shell[k])) for k in keys]
    rho = stats.spearmanr(means, [1 / math.sqrt(k) for k in keys]).statistic
    within = max(float(np.ptp(v)) for v in shell.values())
    raw = stats.spearmanr([p.splitting for p in det.pairs], [1 / R[p.partner] for p in det.pairs]).statistic
    try:
        reg = hb.select_ensemble(det.pairs, ens, sch, N, gamma_L, gamma_h=gamma_h)
        n_sel, weakest = reg.N, reg.weakest_margin
    except hb.PartialRegistryError as e:
        n_sel, weakest = len(e.registry.ids), e.registry.weakest_margin
    weakest_hz = weakest * max(gamma_L, gamma_h)
    # spearmanr can return 1 - ulp for a perfect ranking
    ok = (len(det.pairs) > 0 and err <= gamma_h / 2 and abs(rho - 1.0) <= 1e-12 and within < gamma_h / 2
          and n_sel == N and weakest > 1)
    rows = [
        _row("detected pairs", len(det.pairs)),
        _row("max |splitting - truth|", err, "Hz", lo=0.0, hi=gamma_h / 2),
        _row("Spearman(shell-mean splitting, 1/R)", rho, "", lo=1.0, hi=1.0),
        _row("Spearman(raw splitting, 1/R), ties included", raw),
        _row("max within-shell spread", within, "Hz", lo=0.0, hi=gamma_h / 2),
        _row(f"registry size (target {N})", n_sel, "", lo=N, hi=N),
        _row("weakest pairwise blockade margin", weakest, "", lo=1.0, hi=math.inf),
        _row("weakest pairwise shift", weakest_hz, "Hz", 3e9),
    ]
    return Check(7, "hole-burning oracle", bool(ok), rows,
                 f"{len(det.pairs)} pairs, max err {err / gamma_h:.3f} gamma_h, rho {rho:.3f}, "
                 f"registry {n_sel}/{N}, weakest margin {weakest:.3g}")


# ------------------------------------------------------------------ 8


@_timed
def check_readout(gamma_h: float = 1e6) -> Check:
    phases = [0.0, math.pi / 2, math.pi]
    ro = hadamard_readout_state(phases)
    exact = max(abs(a - b) for a, b in zip(ro["p0"], [1.0, 0.5, 0.0]))
    amp, _ = readout_line_intensities(phases, gamma_h)
    dev = float(np.max(np.abs(amp - np.array(ro["p0"]))))
    ok = exact <= 1e-12 and dev <= 0.01
    rows = [_row(f"P(0) at phi = {p:.4f}", v, "") for p, v in zip(phases, ro["p0"])]
    rows += [_row("closed-form deviation", exact, "", lo=0, hi=1e-12), _row("line intensity deviation", dev, "", lo=0, hi=0.01)]
    return Check(8, "Hadamard readout", ok, rows, "P(0) = " + ", ".join(f"{v:.6g}" for v in ro["p0"]) + "; line intensities "
                 + ", ".join(f"{v:.6g}" for v in amp))


def readout_line_intensities(phases, gamma_h: float = 1e6, spacing: float = 5e9, scheme_id: int = 1):
    """Height of each ion's 0 -> 1' line relative to the same spectrum with every ion fully in |0>."""
    sch = load_scheme("Tm", scheme_id)
    n = len(phases)
    sites = [IonSite(i, (10 * i, 0, 0), np.array([10 * i * A, 0, 0]), 0.0) for i in range(n)]
    hb.set_line_offsets(sites, sch, [i * spacing for i in range(n)])
    ens = hb.IonEnsemble(sites, None)
    ro = hadamard_readout_state(phases)
    occ = np.zeros((n, sch.dim))
    occ[:, sch.index("0")] = ro["p0"]
    occ[:, sch.index("1")] = ro["p1"]
    full = np.zeros_like(occ)
    full[:, sch.index("0")] = 1.0
    tr = [("0", "1'")]
    _, _, _, centers, _ = hb.line_list(ens, full, sch, tr)
    grid = hb.grid_for_lines(centers, gamma_h, pad=200)
    spec = hb.synth_spectrum(ens, occ, sch, gamma_h, grid, tr, tail_widths=None)
    ref = hb.synth_spectrum(ens, full, sch, gamma_h, grid, tr, tail_widths=None)
    k = np.round((centers - grid.ref_hz - grid.start) / grid.step).astype(int)
    return spec.values[k] / ref.values[k], spec


# ------------------------------------------------------------------ 9


@_timed
def check_unitarity(seed: int = 9) -> Check:
    rng = np.random.default_rng(seed)
    worst_u = 0.0
    for _ in range(1000):
        V = single_qubit_unitary(rng.uniform(0, 4 * math.pi), rng.uniform(0, 2 * math.pi))
        worst_u = max(worst_u, float(np.max(np.abs(V.conj().T @ V - np.eye(2)))))
    reg = two_ion_register(30e9)
    sch = reg.schemes[0]
    roles = [("g", "0"), ("0", "1'"), ("1", "1'"), ("0", "1"), ("g", "1'")]
    st = EnsembleState.basis(reg.dims, [sch.index("0"), sch.index("0")])
    drift = 0.0
    for _ in range(100):
        ion = int(rng.integers(2))
        ra, rb = roles[rng.integers(len(roles))]
        p = PulseSpec(reg.transition_hz(ion, ra, rb), rng.uniform(0, 2 * math.pi), rng.uniform(0, 2 * math.pi),
                      1e-9, None, (ra, rb), ion)
        st = apply_decay(apply_pulse(st, p, reg), p.duration, reg)
        drift = max(drift, abs(st.norm2 + st.leakage - 1.0))
    # partner kept out of 1' so the driven line is unshifted
    v = np.ones(sch.dim) / math.sqrt(sch.dim)
    w = np.ones(sch.dim)
    w[sch.index("1'")] = 0
    st0 = EnsembleState.product([v, w / np.linalg.norm(w)])
    p = PulseSpec(reg.transition_hz(0, "0", "1'"), math.pi, 0.3, 1e-9, None, ("0", "1'"), 0)
    st2 = apply_pulse(apply_pulse(st0, p, reg), p, reg)
    restore = max(float(np.max(np.abs(st2.populations(i) - st0.populations(i)))) for i in range(2))
    ok = drift <= 1e-9 and worst_u <= 1e-12 and restore <= 1e-9
    rows = [
        _row("max |norm^2 + leakage - 1| over 100 pulses", drift, "", lo=0, hi=1e-9),
        _row("max |V^dag V - I|", worst_u, "", lo=0, hi=1e-12),
        _row("double pi-pulse population error", restore, "", lo=0, hi=1e-9),
    ]
    return Check(9, "unitarity / norm suite", ok, rows, f"norm drift {drift:.1e}, unitarity {worst_u:.1e}, restore {restore:.1e}")


# ------------------------------------------------------------------ 10


@_timed
def check_order_of_magnitude() -> Check:
    A_d, A_q, k = paper_prefactors()
    rows = [
        _row("dipole prefactor (a/R)^3", A_d, "Hz", 100e9),
        _row("quadrupole prefactor (a/R)^5", A_q, "Hz", 50e12),
        _row("dipole shift at R = 5a", A_d / 125, "Hz", 5e9),
        _row("quadrupole shift at R = 5a", A_q / 3125, "Hz", 30e9),
    ]
    ok = all(BAND[0] <= r["ratio"] <= BAND[1] for r in rows)
    detail = ", ".join(f"{r['quantity']} ratio {r['ratio']:.2g}" for r in rows)
    detail += f" (omega0 = {OMEGA0_BAR:.3g} rad/s, k = {k:.4g} 1/m)"
    return Check(10, "order-of-magnitude ledger", ok, rows, detail)


CHECKS = [
    check_pi_pulse_field,
    check_power_laws,
    check_isotropy_null,
    check_ensemble_arithmetic,
    check_cnot_truth_table,
    check_blockade_bound,
    check_hole_burning,
    check_readout,
    check_unitarity,
    check_order_of_magnitude,
]


def run_all(only=None) -> list:
    return [fn() for fn in CHECKS if only is None or CHECKS.index(fn) + 1 in only]


def as_records(checks) -> list:
    return [asdict(c) for c in checks]


def flat_rows(checks):
    for c in checks:
        for r in c.rows:
            yield {
                "criterion": c.id,
                "name": c.name,
                "status": "PASS" if c.passed else "FAIL",
                "quantity": r["quantity"],
                "value": r["value"],
                "unit": r.get("unit", ""),
                "paper": r.get("paper", ""),
                "ratio": r.get("ratio", ""),
            }

