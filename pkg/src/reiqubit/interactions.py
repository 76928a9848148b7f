"""Pairwise Stark shifts between dopant ions and the blockade condition.

Two families live here:

* the explicit multipole forms (dipole-dipole and quadrupole-quadrupole)
  for static moment changes expressed in the pair frame, plus a tensor
  version valid for any inter-ion direction;
* the closed-form order-of-magnitude estimators written in terms of the
  radiative rate and diagonal Judd-Ofelt U(2) elements.

All shifts are reported as ordinary frequencies, delta = E_int / (2 pi hbar).
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ion_data import IonDatabase, LevelScheme, default_db
from .phys_core import E_STATC, HBAR, K_B, LATTICE_CONSTANT, erg_to_hz


# mean 4f-4f frequency for the quadrupole estimate, taken as angular:
# 3e15 rad/s is ~15900 cm^-1, inside the 4f-4f range
OMEGA0_BAR = 3e15


@dataclass(frozen=True)
class StaticMoments:
    """Change of static electronic moments of one ion on a transition j -> j'.

    ``dipole`` is the change of <r> (m), ``second`` the change of the
    diagonal second moments (<x^2>, <y^2>, <z^2>) in m^2.  ``tensor``
    optionally carries the full 3x3 second-moment change when the
    moments are not diagonal in the frame used.
    """

    dipole: tuple = (0.0, 0.0, 0.0)
    second: tuple = (0.0, 0.0, 0.0)
    transition: tuple | None = None
    tensor: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def dr2(self) -> float:
        return float(sum(self.second))

    @classmethod
    def from_states(cls, lower: dict, upper: dict, transition=None) -> "StaticMoments":
        """Build the change from per-state moments ``{'r': (x,y,z), 'x2':.., 'y2':.., 'z2':.., 'r2':..}``."""
        for st in (lower, upper):
            s = st["x2"] + st["y2"] + st["z2"]
            if min(st["x2"], st["y2"], st["z2"]) < 0:
                raise ValueError("second moments must be non-negative")
            if abs(s - st["r2"]) > 1e-12 * max(abs(st["r2"]), 1e-300):
                raise ValueError("<x2>+<y2>+<z2> must equal <r2>")
        dip = tuple(u - l for u, l in zip(upper.get("r", (0, 0, 0)), lower.get("r", (0, 0, 0))))
        sec = tuple(upper[k] - lower[k] for k in ("x2", "y2", "z2"))
        return cls(dip, sec, transition)

    def second_tensor(self) -> np.ndarray:
        if self.tensor is not None:
            return np.asarray(self.tensor, dtype=float)
        return np.diag(np.asarray(self.second, dtype=float))

    def rotated(self, rot: np.ndarray) -> "StaticMoments":
        """Express the moments in a frame whose axes are the rows of ``rot``."""
        t = rot @ self.second_tensor() @ rot.T
        d = rot @ np.asarray(self.dipole, dtype=float)
        return StaticMoments(tuple(d), tuple(np.diag(t)), self.transition, t)


@dataclass(frozen=True)
class PairShift:
    m1: int
    m2: int
    roles: tuple
    R: float
    delta_d: float
    delta_q: float

    @property
    def delta_total(self) -> float:
        return self.delta_d + self.delta_q

    @property
    def dominant(self) -> str:
        return "quadrupole" if abs(self.delta_q) >= abs(self.delta_d) else "dipole"


def _check_R(R):
    if not R > 0:
        raise ValueError(f"inter-ion distance must be > 0, got {R}")


def dipole_shift_full(m1: StaticMoments, m2: StaticMoments, R: float, eps_r: float = 1.0) -> float:
    """Dipole-dipole transition shift (Hz); x is the inter-ion axis, lengths in m."""
    _check_R(R)
    d1 = np.asarray(m1.dipole) * 1e2
    d2 = np.asarray(m2.dipole) * 1e2
    bracket = -2 * d1[0] * d2[0] + d1[1] * d2[1] + d1[2] * d2[2]
    return erg_to_hz(E_STATC**2 / (eps_r * (R * 1e2) ** 3) * bracket)


def _traceless_diag(d: np.ndarray) -> np.ndarray:
    x, y, z = d
    return np.array([2 * x - y - z, 2 * y - x - z, 2 * z - x - y]) / 3


def _traceless(t: np.ndarray) -> np.ndarray:
    t = np.array(t, dtype=float)
    t[np.diag_indices(3)] = _traceless_diag(np.diag(t))
    return t


def quad_shift_full(m1: StaticMoments, m2: StaticMoments, R: float, eps_r: float = 1.0) -> float:
    """Quadrupole-quadrupole transition shift (Hz) from diagonal second-moment changes."""
    _check_R(R)
    # the bracket only sees traceless parts; (2x - y - z)/3 is exactly 0 for an isotropic side
    x1, y1, z1 = _traceless_diag(np.asarray(m1.second, dtype=float) * 1e4)
    x2, y2, z2 = _traceless_diag(np.asarray(m2.second, dtype=float) * 1e4)
    bracket = 17 * x1 * x2 + 2 * y1 * y2 + 2 * z1 * z2
    return erg_to_hz(3 * E_STATC**2 / (4 * eps_r * (R * 1e2) ** 5) * bracket)


def _d4_inverse_r(rvec: np.ndarray) -> np.ndarray:
    """Fourth derivative tensor d_a d_b d_c d_d (1/r)."""
    r = float(np.linalg.norm(rvec))
    x = rvec
    eye = np.eye(3)
    xxxx = np.einsum("a,b,c,d->abcd", x, x, x, x)
    dxx = (
        np.einsum("ab,c,d->abcd", eye, x, x)
        + np.einsum("ac,b,d->abcd", eye, x, x)
        + np.einsum("ad,b,c->abcd", eye, x, x)
        + np.einsum("bc,a,d->abcd", eye, x, x)
        + np.einsum("bd,a,c->abcd", eye, x, x)
        + np.einsum("cd,a,b->abcd", eye, x, x)
    )
    dd = (
        np.einsum("ab,cd->abcd", eye, eye)
        + np.einsum("ac,bd->abcd", eye, eye)
        + np.einsum("ad,bc->abcd", eye, eye)
    )
    return 105 * xxxx / r**9 - 15 * dxx / r**7 + 3 * dd / r**5


def quad_energy_tensor(t1: np.ndarray, t2: np.ndarray, rvec, eps_r: float = 1.0) -> float:
    """Quadrupole-quadrupole energy (Hz) for arbitrary second-moment tensors (m^2) and R vector (m).

    Reduces to :func:`quad_shift_full` when both tensors are diagonal in the
    frame whose x axis is along ``rvec``.
    """
    rv = np.asarray(rvec, dtype=float) * 1e2
    _check_R(float(np.linalg.norm(rv)))
    d4 = _d4_inverse_r(rv)
    t1, t2 = _traceless(np.asarray(t1) * 1e4), _traceless(np.asarray(t2) * 1e4)
    val = 0.25 * np.einsum("ab,cd,abcd->", t1, t2, d4)
    return erg_to_hz(E_STATC**2 / eps_r * val)


def dipole_energy_vector(d1, d2, rvec, eps_r: float = 1.0) -> float:
    rv = np.asarray(rvec, dtype=float) * 1e2
    r = float(np.linalg.norm(rv))
    _check_R(r)
    n = rv / r
    a, b = np.asarray(d1) * 1e2, np.asarray(d2) * 1e2
    return erg_to_hz(E_STATC**2 / eps_r * (a @ b - 3 * (a @ n) * (b @ n)) / r**3)


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be > 0, got {v}")


def dipole_shift_estimate(gamma0: float, eps_r: float, u2_ratio_sq: float, k: float, R: float) -> float:
    """Dipole-channel estimate gamma0 / eps * (U~/U01)^2 * (kR)^-3, in Hz.

    ``k`` in m^-1 and ``R`` in m.  A zero U(2) ratio gives zero.
    """
    _positive(gamma0=gamma0, eps_r=eps_r, k=k, R=R)
    if u2_ratio_sq < 0:
        raise ValueError("u2_ratio_sq must be >= 0")
    return gamma0 / eps_r * u2_ratio_sq * (k * R) ** -3 / (2 * math.pi)


def quad_shift_estimate(dU2_sq: float, omega0: float, r0_sq: float, eps_r: float, R: float) -> float:
    """Quadrupole-channel estimate 25 (U11 - U00)^2 omega0 r0^5 / (eps R^5), in Hz.

    ``omega0`` is angular (rad/s); ``r0_sq`` in m^2, ``R`` in m.
    """
    _positive(omega0=omega0, r0_sq=r0_sq, eps_r=eps_r, R=R)
    if dU2_sq < 0:
        raise ValueError("dU2_sq must be >= 0")
    return 25 * dU2_sq * omega0 * r0_sq**2.5 / (eps_r * R**5) / (2 * math.pi)


@dataclass(frozen=True)
class BlockadeCheck:
    ok: bool
    margin: float

    def __bool__(self):
        return self.ok


def blockade_ok(delta: float, gamma_L: float, gamma_h: float) -> BlockadeCheck:
    """Stark blockade condition |delta| > max(Gamma_L, Gamma_h)."""
    width = max(gamma_L, gamma_h)
    d = abs(delta)
    if width <= 0:
        return BlockadeCheck(d > 0, math.inf if d > 0 else 0.0)
    return BlockadeCheck(d > width, d / width)


def cnot_shift(E, scheme_t: LevelScheme, scheme_c: LevelScheme) -> float:
    """Blockade shift seen by a target when its control moves 0 -> 1'.

    min over the target's 0<->1' and 1<->1' lines of the change in line
    center, from the level-resolved matrix ``E[l_target, l_control]``.
    """
    if E is None:
        return 0.0
    ac, zc = scheme_c.index("1'"), scheme_c.index("0")
    at = scheme_t.index("1'")
    out = []
    for r in ("0", "1"):
        lt = scheme_t.index(r)
        out.append(abs((E[at, ac] - E[lt, ac]) - (E[at, zc] - E[lt, zc])))
    return float(min(out))


def crossover_distance(A_d: float, A_q: float) -> float:
    """Distance (units of a) below which A_q/R^5 exceeds A_d/R^3."""
    _positive(A_d=A_d, A_q=A_q)
    return math.sqrt(A_q / A_d)


def exchange_estimate(R: float, J_nn: float = 1.5, decay: float = 0.4) -> float:
    """Exchange coupling J_nn exp(-(R-1)/decay) in cm^-1; R and decay in units of a."""
    if R < 1:
        raise ValueError("R must be >= 1 lattice constant")
    return J_nn * math.exp(-(R - 1) / decay)


def magnetic_dd_estimate(R: float, M_nn: float = 0.05) -> float:
    """Magnetic dipole-dipole spin coupling M_nn R^-3 in cm^-1 (R in units of a)."""
    if R < 1:
        raise ValueError("R must be >= 1 lattice constant")
    return M_nn * R**-3


def transfer_rate_motional(gamma_exch: float, detuning: float) -> float:
    if gamma_exch < 0:
        raise ValueError("gamma_exch must be >= 0")
    if gamma_exch == 0:
        return 0.0
    return gamma_exch**2 / math.sqrt(gamma_exch**2 + detuning**2)


def bose_occupation(delta_hz: float, T: float) -> float:
    if T < 0:
        raise ValueError("temperature must be >= 0")
    if T == 0 or delta_hz == 0:
        return 0.0 if T == 0 else math.inf
    x = HBAR * 2 * math.pi * abs(delta_hz) / (K_B * T)
    return 1.0 / math.expm1(x)


def forster_rate(gamma_exch: float, kappa: float, delta: float, T: float, detuning: float) -> float:
    """One-phonon assisted transfer rate Gamma_exch^2 kappa^2 (n + 1) / |Delta|."""
    if detuning == 0:
        raise ValueError("resonant regime (Delta = 0): use transfer_rate_motional instead")
    if not kappa < 1:
        raise ValueError("kappa must be < 1")
    if T < 0:
        raise ValueError("temperature must be >= 0")
    n = bose_occupation(delta, T)
    return gamma_exch**2 * kappa**2 * (n + 1) / abs(detuning)


def axial_tensor(q: float, axis=(0.0, 0.0, 1.0)) -> np.ndarray:
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    return q * (np.outer(n, n) - np.eye(3) / 3.0)


def moments_from_u2(
    ion: str,
    level_j: str,
    level_jp: str,
    r0_sq: float,
    axis=(0.0, 0.0, 1.0),
    db: IonDatabase | None = None,
) -> StaticMoments:
    """Axially symmetric second-moment change for j -> j' built from diagonal |U(2)|^2.

    q = (sqrt|U(2)_j'j'|^2 - sqrt|U(2)_jj|^2) r0^2; the parallel component
    is 2q/3 and each perpendicular one -q/3.  The dipole change is zero in
    this model.
    """
    db = db or default_db()
    uj = db.u_sq(ion, level_j, level_j)[0]
    ujp = db.u_sq(ion, level_jp, level_jp)[0]
    q = (math.sqrt(ujp) - math.sqrt(uj)) * r0_sq
    t = axial_tensor(q, axis)
    # diagonal entries in the global frame; the tensor keeps any off-diagonal part
    return StaticMoments((0.0, 0.0, 0.0), tuple(np.diag(t)), (level_j, level_jp), t)


def level_moment_tensors(scheme: LevelScheme, r0_sq: float, axis=(0.0, 0.0, 1.0)) -> list:
    """Second-moment tensor of every scheme level relative to the |0> level."""
    ref = math.sqrt(scheme.roles["0"].u2_diag_sq)
    return [axial_tensor((math.sqrt(lv.u2_diag_sq) - ref) * r0_sq, axis) for lv in scheme.levels]


def level_interaction_matrix(
    tensors_1: list,
    tensors_2: list,
    rvec,
    eps_r: float,
    aux_index: tuple | None = None,
    dipole_extra: float = 0.0,
) -> np.ndarray:
    """Interaction energy (Hz) of ion 1 in level l1 and ion 2 in level l2.

    Entries vanish whenever either ion sits in its |0> level, so bare
    transition frequencies are those of an unexcited neighbourhood.
    ``dipole_extra`` is added on the (1', 1') entry when supplied.
    """
    E = np.array([[quad_energy_tensor(a, b, rvec, eps_r) for b in tensors_2] for a in tensors_1])
    if aux_index is not None and dipole_extra:
        E[aux_index] += dipole_extra
    return E


@dataclass
class PairTable:
    """Level-resolved pair interactions for an ensemble.

    ``energies[(i, j)]`` (i < j by list position) is the matrix E[l_i, l_j]
    in Hz; ``shifts`` lists the scalar blockade shift of each pair.
    """

    energies: dict
    shifts: list

    def matrix(self, i: int, j: int) -> np.ndarray:
        if (i, j) in self.energies:
            return self.energies[(i, j)]
        if (j, i) in self.energies:
            return self.energies[(j, i)].T
        return None

    def shift(self, i: int, j: int) -> float:
        for s in self.shifts:
            if {s.m1, s.m2} == {i, j}:
                return s.delta_total
        return 0.0

    def partners(self, i: int):
        for a, b in self.energies:
            if a == i:
                yield b
            elif b == i:
                yield a


def blockade_only_table(n_ions: int, scheme: LevelScheme, delta: float | dict, pairs=None) -> PairTable:
    """Pair table whose only nonzero entry is E[1', 1'] = delta for each pair.

    Used for protocol studies at a prescribed blockade shift.
    """
    aux = scheme.index("1'")
    energies, shifts = {}, []
    pairs = pairs if pairs is not None else list(itertools.combinations(range(n_ions), 2))
    for i, j in pairs:
        d = delta[(i, j)] if isinstance(delta, dict) else delta
        E = np.zeros((scheme.dim, scheme.dim))
        E[aux, aux] = d
        energies[(i, j)] = E
        shifts.append(PairShift(i, j, ("1'", "1'"), math.nan, 0.0, d))
    return PairTable(energies, shifts)


def pair_shift_table(
    positions,
    scheme: LevelScheme,
    eps_r: float = 10.0,
    r0_sq: float = 0.1 * LATTICE_CONSTANT**2,
    axes=None,
    dipole: dict | None = None,
    ids=None,
    cutoff: float | None = None,
    model: str = "tensor",
    omega0: float = OMEGA0_BAR,
) -> PairTable:
    """Full pair table from ion positions (m).

    ``model="tensor"`` uses the axial U(2) moment model with one principal
    axis per ion in ``axes`` (default: global z for all).  ``model="estimate"``
    puts the isotropic R^-5 estimator on the (1', 1') entry only, with
    dU2 = (sqrt|U(2)_1'1'|^2 - sqrt|U(2)_00|^2)^2 and ``omega0`` in rad/s.
    ``dipole`` optionally enables the dipole-channel estimate with keys
    ``gamma0``, ``k`` and ``u2_ratio_sq``; it is added to the (1', 1')
    entry.  Pairs farther apart than ``cutoff`` (m) are skipped.
    """
    if model not in ("tensor", "estimate"):
        raise ValueError(f"unknown pair model {model!r}; use 'tensor' or 'estimate'")
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    ids = list(range(n)) if ids is None else list(ids)
    du2 = (math.sqrt(scheme.roles["1'"].u2_diag_sq) - math.sqrt(scheme.roles["0"].u2_diag_sq)) ** 2
    if axes is None:
        axes = [(0.0, 0.0, 1.0)] * n
    tensors = [level_moment_tensors(scheme, r0_sq, ax) for ax in axes]
    aux = scheme.index("1'")
    a = LATTICE_CONSTANT
    A_d = A_q = None
    if dipole:
        A_d = dipole_shift_estimate(dipole["gamma0"], eps_r, dipole.get("u2_ratio_sq", 1.0), dipole["k"], a)
        q_aux = math.sqrt(scheme.roles["1'"].u2_diag_sq) - math.sqrt(scheme.roles["0"].u2_diag_sq)
        A_q = abs(quad_energy_tensor(axial_tensor(q_aux * r0_sq), axial_tensor(q_aux * r0_sq), (a, 0, 0), eps_r))
        r_star = crossover_distance(A_d, A_q) if A_q > 0 else 0.0
    energies, shifts = {}, []
    warned = False
    for i, j in itertools.combinations(range(n), 2):
        rvec = pos[j] - pos[i]
        R = float(np.linalg.norm(rvec))
        if cutoff is not None and R > cutoff:
            continue
        d_d = 0.0
        if dipole:
            d_d = dipole_shift_estimate(dipole["gamma0"], eps_r, dipole.get("u2_ratio_sq", 1.0), dipole["k"], R)
            if not warned and r_star > 0 and 0.5 * r_star <= R / a <= 2 * r_star:
                warnings.warn(
                    f"R = {R / a:.1f}a is near the dipole/quadrupole crossover ({r_star:.1f}a); "
                    "the omitted dipole-quadrupole cross term may be comparable",
                    stacklevel=2,
                )
                warned = True
        if model == "tensor":
            E = level_interaction_matrix(tensors[i], tensors[j], rvec, eps_r, (aux, aux), d_d)
        else:
            E = np.zeros((scheme.dim, scheme.dim))
            E[aux, aux] = quad_shift_estimate(du2, omega0, r0_sq, eps_r, R) + d_d
        energies[(i, j)] = E
        shifts.append(PairShift(ids[i], ids[j], ("1'", "1'"), R, d_d, float(E[aux, aux] - d_d)))
    return PairTable(energies, shifts)


def write_pair_table(path, table: PairTable, gamma_L: float, gamma_h: float, delimiter: str = ",") -> None:
    rows = sorted(table.shifts, key=lambda s: (min(s.m1, s.m2), max(s.m1, s.m2)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(delimiter.join(
            ["id1", "id2", "R_over_a", "delta_d_Hz", "delta_q_Hz", "delta_total_Hz", "blockade_margin"]
        ) + "\n")
        for s in rows:
            m = blockade_ok(s.delta_total, gamma_L, gamma_h).margin
            fh.write(delimiter.join([
                str(min(s.m1, s.m2)), str(max(s.m1, s.m2)), f"{s.R / LATTICE_CONSTANT:.12g}",
                f"{s.delta_d:.12g}", f"{s.delta_q:.12g}", f"{s.delta_total:.12g}", f"{m:.12g}",
            ]) + "\n")
