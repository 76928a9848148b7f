"""Laser-pulse parameters and state-vector evolution of a few-ion register.

Conventions
-----------
* A pulse of area ``theta`` and duration ``t_p`` has resonant Rabi rate
  ``Omega = theta / t_p`` (rad/s) and spectral width ``Gamma_L = 1 / t_p``.
* Evolution is computed in the interaction picture of the bare (offset
  included, interaction free) level Hamiltonian.  Pair interactions are a
  diagonal Hamiltonian over product-basis components; a driven transition
  therefore sees an exact, occupation-dependent detuning.
* For a driven pair of levels (lower ``a``, upper ``b``) and laser detuning
  ``Delta = omega_L - omega_ab`` the rotating-frame generator is
  ``(Delta/2) sigma_z - (Omega/2)(sigma_x sin phi + sigma_y cos phi)``,
  which at ``Delta = 0`` reproduces ``V(theta, phi)`` exactly.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import expm_multiply

from .ion_data import LevelScheme
from .phys_core import (
    ALPHA,
    C_CGS,
    E_STATC,
    HBAR_CGS,
    Z0,
    statvolt_cm_to_volt_cm,
)

MAX_IONS = 10
MAX_DIM = 4**MAX_IONS

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be > 0, got {v}")


def dipole_matrix_element(gamma0: float, k: float) -> float:
    """|<0|r|1>| = sqrt(3 gamma0 / (4 alpha c k^3)) in m, for k in m^-1."""
    _positive(gamma0=gamma0, k=k)
    k_cgs = k * 1e-2
    return math.sqrt(3 * gamma0 / (4 * ALPHA * C_CGS * k_cgs**3)) * 1e-2


def pi_pulse_field(gamma_L: float, k: float, gamma0: float) -> float:
    """Field amplitude (V/cm) of a pi pulse of width gamma_L (s^-1)."""
    _positive(gamma_L=gamma_L, k=k, gamma0=gamma0)
    k_cgs = k * 1e-2
    e_gauss = 2 * math.pi * gamma_L * math.sqrt(HBAR_CGS * k_cgs**3 / (3 * gamma0))
    return statvolt_cm_to_volt_cm(e_gauss)


def pi_pulse_field_from_dipole(gamma_L: float, k: float, gamma0: float) -> float:
    """Same field from theta = e E d / (hbar Gamma_L) = pi, using the dipole element."""
    d_cm = dipole_matrix_element(gamma0, k) * 1e2
    return statvolt_cm_to_volt_cm(math.pi * HBAR_CGS * gamma_L / (E_STATC * d_cm))


def power_density(field_v_cm: float) -> float:
    """Intensity E^2 / Z in W/cm^2 for a field in V/cm."""
    if field_v_cm < 0:
        raise ValueError("field must be >= 0")
    e_si = field_v_cm * 1e2  # V/m
    return e_si**2 / Z0 * 1e-4


def pulse_energy(field_v_cm: float, area_cm2: float, gamma_L: float) -> float:
    """Pulse energy I S / Gamma_L in J."""
    _positive(area_cm2=area_cm2, gamma_L=gamma_L)
    return power_density(field_v_cm) * area_cm2 / gamma_L


def single_qubit_unitary(theta: float, phi: float) -> np.ndarray:
    """V(theta, phi) = I cos(theta/2) + i (sx sin phi + sy cos phi) sin(theta/2)."""
    return np.eye(2) * math.cos(theta / 2) + 1j * (
        SIGMA_X * math.sin(phi) + SIGMA_Y * math.cos(phi)
    ) * math.sin(theta / 2)


def _rotation_blocks(omega, delta, phi, t, h0=0.0):
    """Vectorized exp(-i H t) for H = h0 + (delta/2) sz - (omega/2)(sx sin phi + sy cos phi).

    ``delta`` and ``h0`` may be arrays; returns (..., 2, 2).
    """
    delta = np.asarray(delta, dtype=float)
    h0 = np.broadcast_to(np.asarray(h0, dtype=float), delta.shape)
    hz = delta / 2
    hx = -omega / 2 * math.sin(phi)
    hy = -omega / 2 * math.cos(phi)
    w = np.sqrt(hz**2 + hx**2 + hy**2)
    wt = w * t
    c = np.cos(wt)
    # sin(wt)/w with the w -> 0 limit t
    s = np.where(w > 0, np.sin(wt) / np.where(w > 0, w, 1.0), t)
    ph = np.exp(-1j * h0 * t)
    U = np.empty(delta.shape + (2, 2), dtype=complex)
    U[..., 0, 0] = c - 1j * s * hz
    U[..., 1, 1] = c + 1j * s * hz
    U[..., 0, 1] = -1j * s * (hx - 1j * hy)
    U[..., 1, 0] = -1j * s * (hx + 1j * hy)
    return U * ph[..., None, None]


def detuned_rotation(omega: float, delta: float, phi: float, t: float) -> np.ndarray:
    """exp(-i H t), H = (delta/2) sz - (omega/2)(sx sin phi + sy cos phi); rates in rad/s."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return _rotation_blocks(omega, np.float64(delta), phi, t)


def rabi_bound(omega: float, delta: float) -> float:
    """Maximum transfer Omega^2 / (Omega^2 + Delta^2) of a detuned drive."""
    return omega**2 / (omega**2 + delta**2)


@dataclass
class PulseSpec:
    """One square laser pulse.  ``carrier`` is an absolute optical frequency in Hz."""

    carrier: float
    theta: float = math.pi
    phase: float = 0.0
    duration: float = 1e-9
    w_cut: float | None = None
    roles: tuple | None = None
    ion_id: int | None = None

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("pulse area must be >= 0")
        if not self.duration > 0:
            raise ValueError("pulse duration must be > 0")
        if self.w_cut is None:
            self.w_cut = 5.0 * self.gamma_L
        if self.w_cut < self.gamma_L:
            raise ValueError("addressing cutoff must be >= Gamma_L")

    @property
    def gamma_L(self) -> float:
        return 1.0 / self.duration

    @property
    def omega(self) -> float:
        return self.theta / self.duration


@dataclass
class Register:
    """Ions taking part in a simulation: schemes, level frequencies, pair table."""

    schemes: list
    level_hz: list  # per ion: absolute level frequencies (Hz) in scheme.levels order
    pair_table: object = None
    ids: list | None = None
    _diag_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.ids is None:
            self.ids = list(range(len(self.schemes)))
        if len(self.schemes) > MAX_IONS:
            raise ValueError(f"at most {MAX_IONS} ions per state-vector run")

    @classmethod
    def from_sites(cls, sites, scheme: LevelScheme, pair_table=None) -> "Register":
        return cls(
            [scheme] * len(sites),
            [s.level_frequencies(scheme) for s in sites],
            pair_table,
            [s.id for s in sites],
        )

    @property
    def dims(self) -> tuple:
        return tuple(s.dim for s in self.schemes)

    def transitions(self, i: int):
        """(lower, upper, frequency Hz) for every level pair of ion i."""
        f = self.level_hz[i]
        for a, b in itertools.combinations(range(len(f)), 2):
            lo, hi = (a, b) if f[a] <= f[b] else (b, a)
            yield lo, hi, f[hi] - f[lo]

    def transition_hz(self, i: int, role_a: str, role_b: str) -> float:
        sch = self.schemes[i]
        return abs(self.level_hz[i][sch.index(role_b)] - self.level_hz[i][sch.index(role_a)])

    def nearest_transition(self, i: int, carrier: float):
        return min(self.transitions(i), key=lambda t: abs(t[2] - carrier))

    def addressed(self, pulse: PulseSpec) -> list:
        out = []
        for i in range(len(self.schemes)):
            lo, hi, f = self.nearest_transition(i, pulse.carrier)
            if abs(f - pulse.carrier) <= pulse.w_cut:
                out.append((i, lo, hi, f))
        return out

    def interaction_diagonal(self) -> np.ndarray:
        """Pair interaction energy (Hz) of every product-basis component."""
        dims = self.dims
        key = dims
        if key in self._diag_cache:
            return self._diag_cache[key]
        D = np.zeros(dims)
        if self.pair_table is not None:
            n = len(dims)
            for i, j in itertools.combinations(range(n), 2):
                E = self.pair_table.matrix(i, j)
                if E is None or not np.any(E):
                    continue
                shape = [1] * n
                shape[i], shape[j] = dims[i], dims[j]
                D = D + E.reshape(shape)
        D = D.reshape(-1)
        self._diag_cache[key] = D
        return D


@dataclass
class EnsembleState:
    dims: tuple
    psi: np.ndarray
    leakage: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        self.dims = tuple(self.dims)
        size = int(np.prod(self.dims))
        if size > MAX_DIM or len(self.dims) > MAX_IONS:
            raise ValueError(f"state dimension {size} exceeds the desk-scale cap 4^{MAX_IONS}")
        self.psi = np.asarray(self.psi, dtype=complex).reshape(size)

    @classmethod
    def basis(cls, dims, levels) -> "EnsembleState":
        psi = np.zeros(dims, dtype=complex)
        psi[tuple(levels)] = 1.0
        return cls(dims, psi)

    @classmethod
    def product(cls, vectors) -> "EnsembleState":
        psi = np.array([1.0 + 0j])
        for v in vectors:
            psi = np.kron(psi, np.asarray(v, dtype=complex))
        return cls(tuple(len(v) for v in vectors), psi)

    def copy(self) -> "EnsembleState":
        return replace(self, psi=self.psi.copy())

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.psi, self.psi).real)

    def populations(self, ion: int) -> np.ndarray:
        p = np.abs(self.psi.reshape(self.dims)) ** 2
        axes = tuple(a for a in range(len(self.dims)) if a != ion)
        return p.sum(axis=axes)


def _apply_single(state, reg, pulse, i, lo, hi, f_bare):
    dims = state.dims
    t = pulse.duration
    delta_L = 2 * math.pi * (pulse.carrier - f_bare)
    phi_eff = pulse.phase + delta_L * state.time
    D = 2 * math.pi * reg.interaction_diagonal().reshape(dims)
    pre = int(np.prod(dims[:i]))
    post = int(np.prod(dims[i + 1:]))
    psi = state.psi.reshape(pre, dims[i], post)
    Dv = D.reshape(pre, dims[i], post)
    out = np.empty_like(psi)
    for l in range(dims[i]):
        if l not in (lo, hi):
            out[:, l, :] = psi[:, l, :] * np.exp(-1j * Dv[:, l, :] * t)
    # block H = diag(Da, Db - delta_L) + drive  ->  h0 + (hz) sz form
    ea = Dv[:, lo, :]
    eb = Dv[:, hi, :] - delta_L
    h0 = (ea + eb) / 2
    det = ea - eb  # coefficient of sz is det/2
    U = _rotation_blocks(pulse.omega, det, phi_eff, t, h0)
    a, b = psi[:, lo, :], psi[:, hi, :]
    out[:, lo, :] = U[..., 0, 0] * a + U[..., 0, 1] * b
    out[:, hi, :] = (U[..., 1, 0] * a + U[..., 1, 1] * b) * np.exp(-1j * delta_L * t)
    return out.reshape(-1)


def _apply_multi(state, reg, pulse, targets):
    dims = state.dims
    n = len(dims)
    t = pulse.duration
    H = sparse.diags(2 * math.pi * reg.interaction_diagonal()).tocsr().astype(complex)
    post_phase = np.zeros(dims)

    def embed(op, i):
        mats = [sparse.identity(d, format="csr") for d in dims]
        mats[i] = sparse.csr_matrix(op)
        out = mats[0]
        for m in mats[1:]:
            out = sparse.kron(out, m, format="csr")
        return out

    for i, lo, hi, f_bare in targets:
        delta_L = 2 * math.pi * (pulse.carrier - f_bare)
        phi_eff = pulse.phase + delta_L * state.time
        op = np.zeros((dims[i], dims[i]), dtype=complex)
        op[hi, hi] = -delta_L
        op[lo, hi] = 1j * pulse.omega / 2 * np.exp(1j * phi_eff)
        op[hi, lo] = -1j * pulse.omega / 2 * np.exp(-1j * phi_eff)
        H = H + embed(op, i)
        shape = [1] * n
        shape[i] = dims[i]
        ph = np.zeros(dims[i])
        ph[hi] = delta_L
        post_phase = post_phase + ph.reshape(shape)
    psi = expm_multiply(-1j * t * H, state.psi)
    return psi * np.exp(-1j * t * post_phase.reshape(-1))


def apply_pulse(state: EnsembleState, pulse: PulseSpec, reg: Register) -> EnsembleState:
    """Apply one pulse to every ion whose nearest transition is within ``w_cut`` of the carrier."""
    targets = reg.addressed(pulse)
    if not targets:
        warnings.warn(f"pulse at {pulse.carrier:.6e} Hz is resonant with no ion", stacklevel=2)
        return state.copy()
    if len(targets) == 1:
        psi = _apply_single(state, reg, pulse, *targets[0])
    else:
        psi = _apply_multi(state, reg, pulse, targets)
    return EnsembleState(state.dims, psi, state.leakage, state.time + pulse.duration)


def apply_decay(state: EnsembleState, dt: float, reg: Register) -> EnsembleState:
    """No-jump amplitude damping exp(-dt / 2 tau) per occupied level; lost weight goes to leakage."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if dt == 0:
        return state.copy()
    factor = np.ones(1)
    for sch in reg.schemes:
        rates = np.array([0.0 if math.isinf(lv.lifetime_s) else 1.0 / lv.lifetime_s for lv in sch.levels])
        factor = np.kron(factor, np.exp(-dt * rates / 2))
    psi = state.psi * factor
    lost = state.norm2 - float(np.vdot(psi, psi).real)
    return EnsembleState(state.dims, psi, state.leakage + lost, state.time)


def random_phase_kick(state: EnsembleState, reg: Register, gamma_h: float, dt: float, rng) -> EnsembleState:
    """Optional pure-dephasing model: random level phases with variance 2 pi gamma_h dt per excited level."""
    phases = np.zeros(1)
    for sch in reg.schemes:
        ph = rng.normal(0.0, math.sqrt(2 * math.pi * gamma_h * dt), sch.dim)
        ph[0] = 0.0
        phases = np.add.outer(phases, ph).reshape(-1)
    return EnsembleState(state.dims, state.psi * np.exp(1j * phases), state.leakage, state.time)


SCHEDULE_FIELDS = [
    "index", "ion_id", "carrier_hz", "role_a", "role_b", "theta_over_pi", "phase", "t_p_s", "w_cut_hz",
]


def write_schedule(path, pulses, delimiter: str = ",") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(SCHEDULE_FIELDS)
        for n, p in enumerate(pulses):
            ra, rb = p.roles if p.roles else ("", "")
            w.writerow([
                n, "" if p.ion_id is None else p.ion_id, repr(float(p.carrier)), ra, rb,
                repr(float(p.theta) / math.pi), repr(float(p.phase)), repr(float(p.duration)), repr(float(p.w_cut)),
            ])


def read_schedule(path, reg: Register | None = None, delimiter: str = ",") -> list:
    """Read a schedule; rows without a carrier are resolved from (ion_id, roles) through ``reg``."""
    pulses = []
    with open(path, encoding="utf-8") as fh:
        rows = sorted(csv.DictReader(fh, delimiter=delimiter), key=lambda r: int(r["index"]))
    for row in rows:
        ion = int(row["ion_id"]) if row.get("ion_id") else None
        roles = (row["role_a"], row["role_b"]) if row.get("role_a") else None
        if row.get("carrier_hz"):
            carrier = float(row["carrier_hz"])
        else:
            if reg is None or ion is None or roles is None:
                raise ValueError(f"schedule row {row['index']}: no carrier and no (ion, roles) to resolve it")
            carrier = reg.transition_hz(reg.ids.index(ion), *roles)
        w_cut = float(row["w_cut_hz"]) if row.get("w_cut_hz") else None
        pulses.append(PulseSpec(
            carrier, float(row["theta_over_pi"]) * math.pi, float(row.get("phase") or 0.0),
            float(row["t_p_s"]), w_cut, roles, ion,
        ))
    return pulses
