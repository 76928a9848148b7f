"""Command-line front end: ``reiqubit <subcommand> [--config run.yaml] [--seed N] [--out DIR]``.

Every run writes ``<out>/<subcommand>.json`` (or ``.csv``), the effective
configuration ``<out>/config.yaml`` and timing details in
``<out>/metadata.json``.  Figures go to ``<out>/figures``.  Reports are a
pure function of (config, seed).
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import config as cfgmod
from . import hole_burning as hb
from . import paper_check as pc
from . import plotting
from .ensemble import EmptyEnsembleError, IonSite, empirical_fwhm, gamma_h, mean_spacing, sample_sites, write_sites
from .interactions import (
    OMEGA0_BAR,
    blockade_only_table,
    crossover_distance,
    pair_shift_table,
    write_pair_table,
)
from .ion_data import NotFoundError, default_db, load_scheme, transition_frequency
from .phys_core import cm1_to_hz, wave_number
from .protocols import (
    PLUS,
    AddressingCollision,
    BlockadeRefused,
    ccnot_plan,
    gate_fidelity,
    hadamard_readout_state,
    ideal_controlled_not,
    plan_simulator,
)
from .pulses import (
    Register,
    dipole_matrix_element,
    pi_pulse_field,
    pi_pulse_field_from_dipole,
    power_density,
    pulse_energy,
    write_schedule,
)

EXIT_OK, EXIT_FAIL, EXIT_VALIDATION, EXIT_PHYSICS = 0, 1, 2, 3
PHYSICS_ERRORS = (BlockadeRefused, AddressingCollision, hb.PartialRegistryError, EmptyEnsembleError)
VALIDATION_ERRORS = (ValueError, KeyError, NotFoundError, OSError, yaml.YAMLError)


class Run:
    """Output directory plus the bits every subcommand needs."""

    def __init__(self, cfg, fmt: str):
        self.cfg = cfg
        self.fmt = fmt
        self.out = Path(cfg.out)
        self.fig_dir = self.out / "figures"
        self.out.mkdir(parents=True, exist_ok=True)
        self.fig_dir.mkdir(exist_ok=True)

    def path(self, name):
        return self.out / name

    def fig(self, name):
        return self.fig_dir / name


# ------------------------------------------------------------ subcommands


def cmd_ions(run: Run):
    db = default_db()
    doc = db.as_dict()
    rows = [dict(lv) for lv in doc["levels"]]
    return doc, rows


def cmd_ensemble(run: Run):
    cfg = run.cfg
    sch = load_scheme(cfg.ion.name, cfg.ion.scheme)
    sites = sample_sites(cfg.crystal, cfg.box_edge, cfg.seed, sch)
    write_sites(run.path("sites.csv"), sites, sch)
    offs = np.array([s.offset_hz for s in sites])
    doc = {
        "ion": sch.ion,
        "scheme": sch.scheme_id,
        "box_edge": cfg.box_edge,
        "n_ions": len(sites),
        "mean_spacing_a": mean_spacing(cfg.crystal.c),
        "gamma_inh_hz": cfg.crystal.gamma_inh,
        "empirical_fwhm_hz": empirical_fwhm(offs, cfg.crystal.distribution) if len(offs) > 1 else None,
        "gamma_h_hz": gamma_h(cfg.crystal, cfg.temperature),
        "sites_file": "sites.csv",
    }
    fig, ax = plotting._figure(5.0, 3.5)
    ax.hist(offs / 1e9, bins=50, color="C0")
    ax.set_xlabel("offset (GHz)")
    ax.set_ylabel("ions")
    doc["figures"] = [Path(plotting._save(fig, run.fig("ensemble_offsets.png"))).name]
    return doc, [{k: v for k, v in doc.items() if not isinstance(v, list)}]


def _nearest(sites, n):
    """The n sites nearest the box centre, in id order."""
    pos = np.array([s.ijk for s in sites], dtype=float)
    d = np.linalg.norm(pos - pos.mean(axis=0), axis=1)
    keep = np.sort(np.lexsort((np.arange(len(sites)), d))[:n])
    return [sites[k] for k in keep]


def cmd_shifts(run: Run):
    cfg = run.cfg
    sch = load_scheme(cfg.ion.name, cfg.ion.scheme)
    sites = _nearest(sample_sites(cfg.crystal, cfg.box_edge, cfg.seed, sch), cfg.shifts.max_ions)
    a = cfg.crystal.a
    cutoff = None if cfg.shifts.cutoff_a is None else cfg.shifts.cutoff_a * a
    tab = pair_shift_table(np.array([s.position for s in sites]), sch, cfg.crystal.eps_r, cfg.crystal.r0_sq,
                           ids=[s.id for s in sites], cutoff=cutoff, model=cfg.shifts.model)
    gL, gh = cfg.pulse.gamma_L, gamma_h(cfg.crystal, cfg.temperature)
    write_pair_table(run.path("pair_table.csv"), tab, gL, gh)
    A_d, A_q, k = pc.paper_prefactors(cfg.crystal.n)
    tot = np.array([s.delta_total for s in tab.shifts]) if tab.shifts else np.zeros(0)
    doc = {
        "ion": sch.ion,
        "scheme": sch.scheme_id,
        "model": cfg.shifts.model,
        "n_ions": len(sites),
        "n_pairs": len(tab.shifts),
        "max_abs_shift_hz": float(np.max(np.abs(tot))) if len(tot) else 0.0,
        "median_abs_shift_hz": float(np.median(np.abs(tot))) if len(tot) else 0.0,
        "pairs_above_gamma_L": int(np.sum(np.abs(tot) > gL)),
        "estimate": {
            "omega0_rad_s": OMEGA0_BAR,
            "k_per_m": k,
            "dipole_prefactor_hz": A_d,
            "quadrupole_prefactor_hz": A_q,
            "crossover_a": crossover_distance(A_d, A_q) if A_d > 0 else None,
        },
        "pair_table_file": "pair_table.csv",
    }
    figs = [
        plotting.shifts_figure(A_d, A_q, run.fig("shifts_vs_R.png"), widths={"Gamma_L": gL}),
        plotting.pair_shift_histogram(tot, run.fig("pair_shifts.png")),
    ]
    doc["figures"] = [Path(f).name for f in figs]
    rows = [{"id1": s.m1, "id2": s.m2, "R_over_a": s.R / a, "delta_total_hz": s.delta_total} for s in tab.shifts]
    return doc, rows


def cmd_pulse(run: Run):
    cfg = run.cfg
    sch = load_scheme(cfg.ion.name, cfg.ion.scheme)
    p = cfg.pulse
    wn = transition_frequency(sch, *p.roles)
    k = wave_number(wn, cfg.crystal.n)
    E = pi_pulse_field(p.gamma_L, k, p.gamma0)
    E_alt = pi_pulse_field_from_dipole(p.gamma_L, k, p.gamma0)
    # non-pi pulse areas scale the field linearly
    E *= p.theta / math.pi
    E_alt *= p.theta / math.pi
    I = power_density(E)
    doc = {
        "ion": sch.ion,
        "scheme": sch.scheme_id,
        "transition": list(p.roles),
        "wavenumber_cm1": wn,
        "frequency_hz": cm1_to_hz(wn),
        "k_per_m": k,
        "gamma_L": p.gamma_L,
        "theta": p.theta,
        "dipole_m": dipole_matrix_element(p.gamma0, k),
        "field_v_cm": E,
        "field_from_dipole_v_cm": E_alt,
        "field_forms_rel_diff": abs(E - E_alt) / E,
        "power_density_w_cm2": I,
        "pulse_energy_j": pulse_energy(E, p.area_cm2, p.gamma_L),
        "paper": {"field_v_cm": 3e4, "field_text": "~3e4 V/cm", "power_density_w_cm2": 2e6,
                  "power_text": "~2 MW/cm^2"},
        "ratio": {"field": E / 3e4, "power_density": I / 2e6},
    }
    rows = [
        {"quantity": "field", "value": E, "unit": "V/cm", "paper": 3e4, "ratio": E / 3e4},
        {"quantity": "power_density", "value": I, "unit": "W/cm^2", "paper": 2e6, "ratio": I / 2e6},
        {"quantity": "pulse_energy", "value": doc["pulse_energy_j"], "unit": "J", "paper": "", "ratio": ""},
    ]
    return doc, rows


def _burn_experiment(cfg):
    b = cfg.burn
    sch = load_scheme(b.scheme_ion, b.scheme)
    ens = hb.comb_ensemble(b.n_ions, cfg.crystal.c, cfg.seed, sch, b.gamma_h, cfg.crystal.a, cfg.crystal.eps_r,
                           cfg.crystal.r0_sq, b.model, b.gap, b.burn_ion)
    ex = hb.run_burn(ens, sch, b.gamma_h, cfg.pulse.gamma_L, b.burn_ion, noise=b.noise)
    return ex


def _pair_rows(det):
    return [
        {
            "hole_hz": p.hole_hz,
            "antihole_hz": p.antihole_hz,
            "splitting_hz": p.splitting,
            "hole_area": p.hole_area,
            "antihole_area": p.antihole_area,
            "partner": p.partner,
            "true_shift_hz": p.true_shift,
        }
        for p in det.pairs
    ]


def cmd_burn(run: Run):
    cfg = run.cfg
    ex = _burn_experiment(cfg)
    ex.before.write(run.path("spectrum_before.csv"))
    ex.after.write(run.path("spectrum_after.csv"))
    (ex.after - ex.before).write(run.path("spectrum_difference.csv"))
    det = ex.detection
    with open(run.path("hole_pairs.json"), "w", encoding="utf-8") as fh:
        fh.write(det.to_json() + "\n")
    dist = plotting.distances_a(ex.ensemble, cfg.crystal.a, cfg.burn.burn_ion)
    errs = [abs(p.splitting - abs(p.true_shift)) for p in det.pairs if p.true_shift is not None]
    doc = {
        "n_ions": len(ex.ensemble),
        "gamma_h_hz": ex.gamma_h,
        "burn_carrier_hz": ex.burn.carrier_hz,
        "ions_burned": ex.burn.burned,
        "n_pairs": len(det.pairs),
        "n_unresolved": len(det.unresolved),
        "n_unmatched_holes": len(det.unmatched_holes),
        "n_unmatched_antiholes": len(det.unmatched_antiholes),
        "threshold": det.threshold,
        "max_splitting_error_hz": max(errs) if errs else None,
        "files": ["spectrum_before.csv", "spectrum_after.csv", "spectrum_difference.csv", "hole_pairs.json"],
    }
    figs = [
        plotting.burn_figure(ex.before, ex.after, det, run.fig("burn_spectra.png")),
        plotting.splitting_figure(det, dist, run.fig("splitting_vs_R.png"), ex.gamma_h),
    ]
    doc["figures"] = [Path(f).name for f in figs]
    return doc, _pair_rows(det)


def cmd_select(run: Run):
    cfg = run.cfg
    b = cfg.burn
    ex = _burn_experiment(cfg)
    try:
        reg = hb.select_ensemble(ex.detection.pairs, ex.ensemble, ex.scheme, b.N, cfg.pulse.gamma_L, b.margin,
                                 b.gamma_h, b.k)
    except hb.PartialRegistryError as e:
        with open(run.path("registry_partial.json"), "w", encoding="utf-8") as fh:
            fh.write(e.registry.to_json() + "\n")
        raise
    with open(run.path("registry.json"), "w", encoding="utf-8") as fh:
        fh.write(reg.to_json() + "\n")
    doc = json.loads(reg.to_json())
    rows = [{"id": i, **{f"freq_{k}": v for k, v in reg.frequencies[i].items()}} for i in reg.ids]
    return doc, rows


def _basis_inputs(n):
    inputs = {}
    for bits in itertools.product((0, 1), repeat=n):
        inputs["".join(map(str, bits))] = tuple(np.eye(2)[b] for b in bits)
    inputs["+" * n] = tuple(PLUS for _ in range(n))
    return inputs


def gate_register(cfg):
    g = cfg.protocol
    sch = load_scheme(g.scheme_ion, g.scheme)
    n = len(g.controls) + 1
    a = cfg.crystal.a
    sites = [IonSite(i, (int(round(i * g.spacing_a)), 0, 0), np.array([i * g.spacing_a * a, 0.0, 0.0]),
                     i * g.line_spacing_hz) for i in range(n)]
    if g.pair_model == "blockade":
        tab = blockade_only_table(n, sch, g.blockade_hz)
    else:
        tab = pair_shift_table(np.array([s.position for s in sites]), sch, cfg.crystal.eps_r, cfg.crystal.r0_sq,
                               model=g.pair_model)
    return Register.from_sites(sites, sch, tab)


def cmd_gate(run: Run):
    cfg = run.cfg
    g = cfg.protocol
    reg = gate_register(cfg)
    plan = ccnot_plan(g.controls, g.target, reg, cfg.pulse.gamma_L, g.gamma_h, cfg.pulse.w_cut)
    write_schedule(run.path("schedule.csv"), plan.pulses)
    n = len(g.controls) + 1
    rep = gate_fidelity(plan_simulator(plan, reg, g.decay), ideal_controlled_not(n - 1), _basis_inputs(n), n,
                        blockade_margin=min(plan.shifts.values()))
    doc = json.loads(rep.to_json())
    doc.update({"kind": plan.kind, "controls": g.controls, "target": g.target, "n_pulses": len(plan.pulses),
                "decay": g.decay, "schedule_file": "schedule.csv"})
    doc["figures"] = [Path(plotting.fidelity_figure(rep, run.fig("gate_fidelity.png"))).name]
    rows = [{"input": k, "fidelity": v, "leakage": rep.leakage[k], "phase": rep.phases[k]}
            for k, v in rep.fidelities.items()]
    return doc, rows


def cmd_readout(run: Run):
    r = run.cfg.readout
    ro = hadamard_readout_state(r.phases)
    amp, spec = pc.readout_line_intensities(r.phases, r.gamma_h, r.line_spacing_hz)
    spec.write(run.path("readout_spectrum.csv"))
    doc = {
        "phases": r.phases,
        "p0": ro["p0"],
        "p1": ro["p1"],
        "line_intensity": amp,
        "spectrum_file": "readout_spectrum.csv",
    }
    doc["figures"] = [Path(plotting.readout_figure(spec, ro["p0"], run.fig("readout.png"))).name]
    rows = [{"ion": i, "phase": p, "p0": a, "p1": b, "line_intensity": float(c)}
            for i, (p, a, b, c) in enumerate(zip(r.phases, ro["p0"], ro["p1"], amp))]
    return doc, rows


def cmd_paper_check(run: Run, only=None):
    checks = pc.run_all(only)
    for c in checks:
        print(c.line(), file=sys.stderr)
    rows = list(pc.flat_rows(checks))
    recs = pc.as_records(checks)
    for r in recs:
        r.pop("runtime_s")  # timings go to metadata only
    doc = {
        "all_passed": all(c.passed for c in checks),
        "checks": recs,
    }
    run.timings = {f"check_{c.id}": c.runtime_s for c in checks}
    allrows = [r for c in checks for r in c.rows]
    figs = [plotting.check_table_figure(checks, run.fig("paper_check.png"))]
    if any(r.get("ratio") not in (None, "") for r in allrows):
        figs.append(plotting.ratio_figure(allrows, run.fig("paper_ratios.png")))
    doc["figures"] = [Path(f).name for f in figs]
    return doc, rows


COMMANDS = {
    "ions": cmd_ions,
    "ensemble": cmd_ensemble,
    "shifts": cmd_shifts,
    "pulse": cmd_pulse,
    "burn": cmd_burn,
    "select": cmd_select,
    "gate": cmd_gate,
    "readout": cmd_readout,
    "paper-check": cmd_paper_check,
}

HELP = {
    "ions": "dump the ion database",
    "ensemble": "sample a doped crystal and export the sites",
    "shifts": "pair-shift table for a sampled ensemble",
    "pulse": "pi-pulse field, power density and energy",
    "burn": "synthetic hole burning: spectra and hole-antihole pairs",
    "select": "qubit registry from a burn",
    "gate": "CNOT / CCNOT simulation and fidelity report",
    "readout": "Hadamard readout populations and spectrum",
    "paper-check": "run every acceptance computation and print a pass/fail table",
}


# ------------------------------------------------------------ plumbing


def to_csv(rows) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    keys = list(dict.fromkeys(k for r in rows for k in r))
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(r.get(k, "")) for k in keys})
    return buf.getvalue()


def _cell(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    if isinstance(v, (np.floating, np.integer)):
        return _cell(v.item())
    if v is None:
        return ""
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override the config seed (u64)")
    common.add_argument("--out", help="output directory (default from config: out)")
    common.add_argument("--format", choices=("json", "csv"), default="json", help="report format")
    ap = argparse.ArgumentParser(prog="reiqubit", description="Rare-earth optical qubit simulator.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=HELP[name])
        if name == "paper-check":
            sp.add_argument("--only", type=int, nargs="+", help="run only these criterion numbers")
            sp.add_argument("--strict", action="store_true", help="exit 1 when any check fails")
    return ap


def _error(exc, code, command):
    doc = {"error": type(exc).__name__, "message": str(exc).strip("'\""), "exit_code": code, "command": command}
    if isinstance(exc, BlockadeRefused):
        doc["margins"] = exc.margins
    if isinstance(exc, hb.PartialRegistryError):
        doc["registry"] = json.loads(exc.registry.to_json())
    print(cfgmod.dumps(doc), end="", file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = cfgmod.load(args.config, {"seed": args.seed, "out": args.out})
        run = Run(cfg, args.format)
        cfgmod.dump(cfg, run.path("config.yaml"))
        fn = COMMANDS[args.command]
        if args.command == "paper-check":
            doc, rows = fn(run, args.only)
        else:
            doc, rows = fn(run)
    except PHYSICS_ERRORS as e:
        return _error(e, EXIT_PHYSICS, args.command)
    except VALIDATION_ERRORS as e:
        return _error(e, EXIT_VALIDATION, args.command)
    name = args.command.replace("-", "_")
    if args.format == "json":
        text = cfgmod.dumps(doc)
    else:
        text = to_csv(rows)
    with open(run.path(f"{name}.{args.format}"), "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    cfgmod.write_metadata(run.path("metadata.json"), args.command, argv, time.perf_counter() - t0)
    if getattr(run, "timings", None):
        meta = json.loads(run.path("metadata.json").read_text())
        meta["check_runtimes_s"] = run.timings
        run.path("metadata.json").write_text(cfgmod.dumps(meta))
    if args.command == "paper-check" and args.strict and not doc["all_passed"]:
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
