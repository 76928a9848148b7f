"""Physical constants and the unit conventions shared by every module.

Frequencies are carried internally as angular frequency (rad/s); cm^-1 and
ordinary Hz only show up at I/O boundaries.  Formulas that are naturally
written in Gaussian units (dipole matrix element, pi-pulse field) are
evaluated in CGS and converted to SI on the way out.
"""

from __future__ import annotations

import math

from scipy import constants as _sc

# SI
C = _sc.c  # m/s, exact
HBAR = _sc.hbar  # J s
H = _sc.h  # J s
E_CHARGE = _sc.e  # C
K_B = _sc.k  # J/K
ALPHA = 1.0 / 137.035999
Z0 = 376.730313668  # ohm, impedance of free space

# Gaussian CGS
C_CGS = C * 1e2  # cm/s
HBAR_CGS = HBAR * 1e7  # erg s
# Derived from alpha so that e^2 / (hbar c) == ALPHA holds to rounding.
E_STATC = math.sqrt(ALPHA * HBAR_CGS * C_CGS)  # statC
STATVOLT_PER_CM_TO_V_PER_CM = 299.792458

LATTICE_CONSTANT = 4e-10  # m


def cm1_to_angular(wavenumber):
    """Spectroscopic wavenumber (cm^-1) to angular frequency (rad/s)."""
    return 2.0 * math.pi * C_CGS * wavenumber


def angular_to_cm1(omega):
    return omega / (2.0 * math.pi * C_CGS)


def cm1_to_hz(wavenumber):
    return C_CGS * wavenumber


def hz_to_cm1(nu):
    return nu / C_CGS


def wave_number(wavenumber_vac, n=1.0):
    """Wave number k = omega n / c in m^-1 for a vacuum wavenumber in cm^-1."""
    if not n >= 1.0:
        raise ValueError(f"refractive index must be >= 1, got {n}")
    return 2.0 * math.pi * wavenumber_vac * 100.0 * n


def statvolt_cm_to_volt_cm(field):
    return field * STATVOLT_PER_CM_TO_V_PER_CM


def volt_cm_to_statvolt_cm(field):
    return field / STATVOLT_PER_CM_TO_V_PER_CM


def energy_to_hz(energy_j):
    """Interaction energy (J) to ordinary frequency shift E / (2 pi hbar)."""
    return energy_j / H


def erg_to_hz(energy_erg):
    return energy_erg / (2.0 * math.pi * HBAR_CGS)
