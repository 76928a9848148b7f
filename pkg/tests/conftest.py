import numpy as np

from reiqubit.ensemble import IonSite
from reiqubit.interactions import blockade_only_table
from reiqubit.ion_data import load_scheme
from reiqubit.phys_core import LATTICE_CONSTANT as A
from reiqubit.pulses import Register


def make_register(n=2, delta_hz=0.0, spacing=50e9, ion="Tm", scheme=1, aux_offsets=None):
    """n ions along x at 3a steps, level offsets scaled from ``spacing``; blockade-only pair table."""
    sch = load_scheme(ion, scheme)
    sites = []
    for i in range(n):
        s = IonSite(i, (3 * i, 0, 0), np.array([3 * i * A, 0, 0]), i * spacing)
        if aux_offsets is not None:
            s.level_offsets_hz = {sch.roles["1'"].label: aux_offsets[i]}
        sites.append(s)
    table = blockade_only_table(n, sch, delta_hz) if n > 1 else None
    return Register.from_sites(sites, sch, table)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
