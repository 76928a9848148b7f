"""Report figures, rendered off-screen to files."""

from __future__ import annotations

import math

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .phys_core import LATTICE_CONSTANT

RC = {"dpi": 120}
# PNG text chunks carry no timestamp; keeping Software out makes files independent of the matplotlib build
_META = {"Software": None}


def _figure(w=6.4, h=4.0, nrows=1, ncols=1, **kw):
    fig = Figure(figsize=(w, h), dpi=RC["dpi"])
    FigureCanvasAgg(fig)
    axes = fig.subplots(nrows, ncols, **kw)
    return fig, axes


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    return str(path)


def envelope(x, y, n_bins: int = 4000):
    """Min/max decimation so narrow features survive plotting of long spectra."""
    x, y = np.asarray(x), np.asarray(y)
    if len(x) <= 2 * n_bins:
        return x, y
    edges = np.linspace(0, len(x), n_bins + 1).astype(int)
    xs, ys = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        seg = y[a:b]
        i, j = a + int(np.argmin(seg)), a + int(np.argmax(seg))
        for k in sorted((i, j)):
            xs.append(x[k])
            ys.append(y[k])
    return np.array(xs), np.array(ys)


def burn_figure(before, after, detection, path, unit=1e9):
    """Absorption before/after the burn and the difference spectrum with the detected pairs marked."""
    fig, (a1, a2) = _figure(7.0, 5.5, 2, 1, sharex=True)
    x = before.offsets / unit
    for spec, lab in ((before, "before"), (after, "after")):
        a1.plot(*envelope(x, spec.values), lw=0.6, label=lab)
    a1.set_ylabel("absorption (1/Hz)")
    a1.legend(frameon=False, fontsize=8)
    d = after - before
    a2.plot(*envelope(x, d.values), lw=0.6, color="k")
    ref = before.ref_hz
    for p in detection.pairs:
        a2.axvline((p.hole_hz - ref) / unit, color="C3", lw=0.4, alpha=0.5)
        a2.axvline((p.antihole_hz - ref) / unit, color="C2", lw=0.4, alpha=0.5)
    a2.set_xlabel(f"offset from {ref / 1e12:.4f} THz (GHz)")
    a2.set_ylabel("after - before")
    return _save(fig, path)


def splitting_figure(detection, distances_a, path, gamma_h=None):
    """Detected splitting against distance from the burned ion."""
    fig, ax = _figure(5.0, 4.0)
    pairs = [p for p in detection.pairs if p.partner in distances_a]
    R = np.array([distances_a[p.partner] for p in pairs])
    s = np.array([p.splitting for p in pairs])
    ax.loglog(R, s / 1e9, ".", ms=4, label="detected")
    t = np.array([abs(p.true_shift) if p.true_shift is not None else np.nan for p in pairs])
    ax.loglog(R, t / 1e9, "x", ms=3, alpha=0.6, label="ground truth")
    if gamma_h:
        ax.axhline(gamma_h / 1e9, ls=":", color="0.5", label=r"$\Gamma_h$")
    ax.set_xlabel("R / a")
    ax.set_ylabel("splitting (GHz)")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def shifts_figure(A_d, A_q, path, r_min=2.0, r_max=100.0, widths=None):
    """Dipole (a/R)^3 and quadrupole (a/R)^5 estimates with their crossover."""
    fig, ax = _figure(5.0, 4.0)
    R = np.geomspace(r_min, r_max, 200)
    ax.loglog(R, A_d / R**3 / 1e9, label="dipole")
    ax.loglog(R, A_q / R**5 / 1e9, label="quadrupole")
    r_star = math.sqrt(A_q / A_d)
    if r_min <= r_star <= r_max:
        ax.axvline(r_star, ls="--", color="0.4", lw=0.8)
    for name, w in (widths or {}).items():
        ax.axhline(w / 1e9, ls=":", lw=0.8, color="0.5")
        ax.text(r_max, w / 1e9, name, ha="right", va="bottom", fontsize=7)
    ax.set_xlabel("R / a")
    ax.set_ylabel("shift (GHz)")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def pair_shift_histogram(shifts_hz, path):
    fig, ax = _figure(5.0, 3.5)
    v = np.abs(np.asarray(shifts_hz, dtype=float))
    v = v[v > 0]
    if len(v):
        ax.hist(np.log10(v), bins=40, color="C0")
    ax.set_xlabel(r"log$_{10}$ |shift / Hz|")
    ax.set_ylabel("pairs")
    return _save(fig, path)


def readout_figure(spec, populations, path, unit=1e9):
    fig, (a1, a2) = _figure(7.0, 3.5, 1, 2)
    a1.plot(*envelope(spec.offsets / unit, spec.values), lw=0.7)
    a1.set_xlabel("offset (GHz)")
    a1.set_ylabel("absorption (1/Hz)")
    n = len(populations)
    a2.bar(np.arange(n), populations, color="C1")
    a2.set_xticks(np.arange(n))
    a2.set_xlabel("ion")
    a2.set_ylabel("P(0)")
    a2.set_ylim(0, 1.05)
    return _save(fig, path)


def fidelity_figure(report, path):
    fig, ax = _figure(5.0, 3.5)
    names = list(report.fidelities)
    ax.bar(names, [report.fidelities[k] for k in names], color="C2")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("fidelity")
    return _save(fig, path)


def check_table_figure(checks, path):
    """Pass/fail table with one line per criterion."""
    rows = [[str(c.id), c.name, "PASS" if c.passed else "FAIL", f"{c.runtime_s:.2f}"] for c in checks]
    fig, ax = _figure(7.5, 0.45 * len(rows) + 0.8)
    ax.axis("off")
    tab = ax.table(cellText=rows, colLabels=["#", "check", "status", "s"], loc="center", cellLoc="left",
                   colWidths=[0.06, 0.66, 0.14, 0.14])
    tab.auto_set_font_size(False)
    tab.set_fontsize(8)
    for (r, col), cell in tab.get_celld().items():
        if r > 0 and col == 2:
            cell.set_facecolor("#d8f0d8" if rows[r - 1][2] == "PASS" else "#f6d5d5")
    return _save(fig, path)


def ratio_figure(rows, path):
    """Artifact / quoted ratios on a log axis with the [0.01, 100] band."""
    rows = [r for r in rows if r.get("ratio") not in (None, "")]
    fig, ax = _figure(6.0, 0.4 * len(rows) + 1.2)
    y = np.arange(len(rows))
    ax.barh(y, [r["ratio"] for r in rows], color="C0")
    ax.set_xscale("log")
    ax.axvspan(0.01, 100, color="0.9", zorder=0)
    ax.axvline(1, color="k", lw=0.6)
    ax.set_yticks(y)
    ax.set_yticklabels([r["quantity"] for r in rows], fontsize=7)
    ax.set_xlabel("artifact / quoted")
    return _save(fig, path)


def distances_a(ensemble, a: float = LATTICE_CONSTANT, origin: int = 0):
    pos = np.array([s.position for s in ensemble.sites]) / a
    d = np.linalg.norm(pos - pos[origin], axis=1)
    return {i: float(v) for i, v in enumerate(d)}
