import math
import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from reiqubit import interactions as it
from reiqubit.ion_data import load_scheme
from reiqubit.phys_core import E_STATC, HBAR, H, LATTICE_CONSTANT as A, erg_to_hz

EPS = 10.0


def coulomb_hz(charges1, charges2, eps):
    """Plain pairwise Coulomb sum (CGS) between two point-charge sets, positions in m."""
    e = 0.0
    for q1, r1 in charges1:
        for q2, r2 in charges2:
            e += q1 * q2 / np.linalg.norm((np.asarray(r2) - np.asarray(r1)) * 1e2)
    return erg_to_hz(e / eps)


def dipole_charges(d, origin):
    d, origin = np.asarray(d, float), np.asarray(origin, float)
    return [(E_STATC, origin + d / 2), (-E_STATC, origin - d / 2)]


def second_moment_charges(s, u, origin):
    """Neutral, dipole-free cluster with sum q x_a^2 = e s_a (linear quadrupole along each axis)."""
    out, c0 = [], 0.0
    for ax in range(3):
        c = E_STATC * s[ax] / (2 * u * u)
        e = np.zeros(3)
        e[ax] = u
        out += [(c, origin + e), (c, origin - e)]
        c0 -= 2 * c
    out.append((c0, np.asarray(origin, float)))
    return out


# ---------------------------------------------------------------- dipole


def test_dipole_zero_change():
    m0 = it.StaticMoments()
    m1 = it.StaticMoments((1e-12, 0, 0))
    assert it.dipole_shift_full(m0, m1, 5 * A) == 0.0


def test_dipole_closed_form_and_fd():
    d = 1e-12
    m = it.StaticMoments((d, 0, 0))
    R = 5 * A
    want = -2 * E_STATC**2 * (d * 1e2) ** 2 / (EPS * (R * 1e2) ** 3) / (H * 1e7)
    assert it.dipole_shift_full(m, m, R, EPS) == pytest.approx(want, rel=1e-12)
    fd = coulomb_hz(dipole_charges((d, 0, 0), (0, 0, 0)), dipole_charges((d, 0, 0), (R, 0, 0)), EPS)
    assert fd == pytest.approx(want, rel=1e-6)


def test_dipole_general_orientation_fd():
    d1, d2 = np.array([1e-12, 2e-12, -1e-12]), np.array([0.5e-12, -1e-12, 2e-12])
    R = 6 * A
    fd = coulomb_hz(dipole_charges(d1, (0, 0, 0)), dipole_charges(d2, (R, 0, 0)), EPS)
    got = it.dipole_shift_full(it.StaticMoments(tuple(d1)), it.StaticMoments(tuple(d2)), R, EPS)
    assert got == pytest.approx(fd, rel=1e-5)
    assert it.dipole_energy_vector(d1, d2, (R, 0, 0), EPS) == pytest.approx(got, rel=1e-12)


def test_dipole_r3_law():
    m = it.StaticMoments((1e-12, 3e-13, 0))
    assert it.dipole_shift_full(m, m, 2 * A) / it.dipole_shift_full(m, m, 4 * A) == pytest.approx(8, rel=1e-14)


# ---------------------------------------------------------------- quadrupole


def test_quad_fd_coulomb():
    s1, s2 = np.array([3e-21, -1e-21, 0.5e-21]), np.array([-2e-21, 1.5e-21, 0.2e-21])
    R = 5 * A
    got = it.quad_shift_full(it.StaticMoments(second=tuple(s1)), it.StaticMoments(second=tuple(s2)), R, EPS)
    errs = []
    for u in (R * 1e-2, R * 5e-3):
        fd = coulomb_hz(second_moment_charges(s1, u, np.zeros(3)), second_moment_charges(s2, u, np.array([R, 0, 0])),
                        EPS)
        errs.append(abs(fd / got - 1))
    # residual is the next multipole order, shrinking as (u/R)^2
    assert errs[1] < 1e-4
    assert errs[1] < errs[0] / 3


def test_quad_bracket_symbolic():
    x, y, z = sp.symbols("x y z", real=True)
    R = sp.symbols("R", positive=True)
    inv_r = 1 / sp.sqrt(x**2 + y**2 + z**2)
    coords = (x, y, z)
    a = sp.symbols("a1:4", real=True)
    b = sp.symbols("b1:4", real=True)
    energy = sum(a[i] * b[j] * sp.diff(inv_r, coords[i], 2, coords[j], 2) for i in range(3) for j in range(3)) / 4
    energy = energy.subs({x: R, y: 0, z: 0})
    r1, r2 = sum(a), sum(b)
    bracket = (r1 - 5 * a[0]) * (r2 - 5 * b[0]) - 8 * a[0] * b[0] + 2 * a[1] * b[1] + 2 * a[2] * b[2]
    assert sp.simplify(energy - sp.Rational(3, 4) * bracket / R**5) == 0
    # isotropic side collapses the bracket
    v = sp.symbols("v")
    assert sp.expand(bracket.subs({a[0]: v, a[1]: v, a[2]: v})) == 0
    assert sp.expand(bracket.subs({b[0]: v, b[1]: v, b[2]: v})) == 0


def test_quad_isotropic_exact_zero():
    rng = np.random.default_rng(0)
    for _ in range(200):
        v = rng.normal() * 1e-21
        iso = it.StaticMoments(second=(v, v, v))
        other = it.StaticMoments(second=tuple(rng.normal(size=3) * 1e-21))
        R = rng.uniform(2, 50) * A
        assert it.quad_shift_full(iso, other, R) == 0.0
        assert it.quad_shift_full(other, iso, R) == 0.0
        n = rng.normal(size=3)
        assert it.quad_energy_tensor(np.eye(3) * v, np.diag(other.second), n / np.linalg.norm(n) * R) == 0.0


def test_axial_bracket():
    """Axial moments along the pair axis: (0 - 5x)^2 - 8x^2 + 4y^2 with x = 2q/3, y = -q/3 is 8 q^2."""
    q = 1e-21
    m = it.StaticMoments(second=(2 * q / 3, -q / 3, -q / 3))
    R = 4 * A
    x, y = 2 * q / 3 * 1e4, -q / 3 * 1e4
    raw = (0 - 5 * x) ** 2 - 8 * x * x + 2 * y * y + 2 * y * y
    assert raw == pytest.approx(8 * (q * 1e4) ** 2, rel=1e-13)
    want = erg_to_hz(3 * E_STATC**2 / (4 * EPS * (R * 1e2) ** 5) * raw)
    assert it.quad_shift_full(m, m, R, EPS) == pytest.approx(want, rel=1e-13)
    # the last three terms alone give -28 q^2 / 9; the first product is what makes it positive
    assert -8 * x * x + 4 * y * y == pytest.approx(-28 * (q * 1e4) ** 2 / 9, rel=1e-13)
    # axis perpendicular to the pair axis: bracket 3 q^2
    mz = it.StaticMoments(second=(-q / 3, -q / 3, 2 * q / 3))
    want_z = erg_to_hz(3 * E_STATC**2 / (4 * EPS * (R * 1e2) ** 5) * 3 * (q * 1e4) ** 2)
    assert it.quad_shift_full(mz, mz, R, EPS) == pytest.approx(want_z, rel=1e-13)


def test_quad_r5_law():
    m = it.StaticMoments(second=(1e-21, -2e-21, 0.5e-21))
    assert it.quad_shift_full(m, m, 3 * A) / it.quad_shift_full(m, m, 6 * A) == pytest.approx(32, rel=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_tensor_form_rotation_invariant_and_matches_pair_frame(seed):
    rng = np.random.default_rng(seed)
    s1, s2 = rng.normal(size=3) * 1e-21, rng.normal(size=3) * 1e-21
    R = rng.uniform(2, 20) * A
    pair = it.quad_shift_full(it.StaticMoments(second=tuple(s1)), it.StaticMoments(second=tuple(s2)), R)
    assert it.quad_energy_tensor(np.diag(s1), np.diag(s2), (R, 0, 0)) == pytest.approx(pair, rel=1e-9, abs=1e-9)
    rot = Rotation.random(random_state=seed % 2**31).as_matrix()
    rotated = it.quad_energy_tensor(rot @ np.diag(s1) @ rot.T, rot @ np.diag(s2) @ rot.T, rot @ [R, 0, 0])
    assert rotated == pytest.approx(pair, rel=1e-9, abs=1e-9)


def test_quad_symmetric_in_ions():
    m1 = it.StaticMoments(second=(1e-21, -2e-21, 0.5e-21))
    m2 = it.StaticMoments(second=(-1e-21, 0.2e-21, 3e-21))
    assert it.quad_shift_full(m1, m2, 5 * A) == pytest.approx(it.quad_shift_full(m2, m1, 5 * A), rel=1e-14)


# ---------------------------------------------------------------- estimates


def test_power_laws_exact():
    k = it.OMEGA0_BAR * 1.6 / 299792458.0
    R = np.linspace(2, 100, 99) * A
    d = np.array([it.dipole_shift_estimate(1e4, 10, 1, k, r) * r**3 for r in R])
    q = np.array([it.quad_shift_estimate(0.1, it.OMEGA0_BAR, 0.1 * A**2, 10, r) * r**5 for r in R])
    assert np.ptp(d) / d.mean() < 1e-12
    assert np.ptp(q) / q.mean() < 1e-12


def test_estimate_zero_and_scaling():
    k = 2e7
    assert it.dipole_shift_estimate(1e4, 10, 0.0, k, 5 * A) == 0.0
    assert it.quad_shift_estimate(0.0, 3e15, 0.1 * A**2, 10, 5 * A) == 0.0
    assert it.dipole_shift_estimate(1e4, 10, 1, k, A) / it.dipole_shift_estimate(1e4, 10, 1, k, 2 * A) == pytest.approx(8)
    assert it.quad_shift_estimate(0.1, 3e15, 0.1 * A**2, 10, A) / it.quad_shift_estimate(
        0.1, 3e15, 0.1 * A**2, 10, 2 * A) == pytest.approx(32, rel=1e-13)
    with pytest.raises(ValueError):
        it.quad_shift_estimate(-1, 3e15, 0.1 * A**2, 10, A)
    with pytest.raises(ValueError):
        it.dipole_shift_estimate(1e4, 10, 1, k, 0.0)


def test_estimate_closed_forms():
    k = it.OMEGA0_BAR * 1.6 / 299792458.0
    A_d = it.dipole_shift_estimate(1e4, 10, 1, k, A)
    assert A_d == pytest.approx(1e4 / 10 / (k * A) ** 3 / (2 * math.pi), rel=1e-14)
    A_q = it.quad_shift_estimate(0.1, it.OMEGA0_BAR, 0.1 * A**2, 10, A)
    assert A_q == pytest.approx(25 * 0.1 * 3e15 * 0.1**2.5 / 10 / (2 * math.pi), rel=1e-14)


def test_full_over_estimate_is_fixed_factor():
    """Axial moments along the pair axis vs the isotropic estimator: ratio 6 e^2 / (25 hbar omega0 r0)."""
    r0_sq = 0.1 * A**2
    want = 6 * E_STATC**2 / (25 * HBAR * 1e7 * it.OMEGA0_BAR * math.sqrt(r0_sq) * 1e2)
    ratios = []
    for ion, lo, hi in [("Tm", "3F4", "1I6"), ("Tm", "3H4", "1I6"), ("Pr", "1G4", "3H4")]:
        m = it.moments_from_u2(ion, lo, hi, r0_sq, axis=(1, 0, 0))
        q = m.second[0] * 1.5
        du2 = (q / r0_sq) ** 2
        for R in (2 * A, 5 * A, 17 * A, 80 * A):
            full = it.quad_shift_full(m, m, R, EPS)
            est = it.quad_shift_estimate(du2, it.OMEGA0_BAR, r0_sq, EPS, R)
            ratios.append(full / est)
    assert np.allclose(ratios, want, rtol=1e-10)


def test_crossover():
    assert it.crossover_distance(100e9, 50e12) == pytest.approx(math.sqrt(500), rel=1e-14)
    assert round(it.crossover_distance(100e9, 50e12), 1) == 22.4
    assert it.crossover_distance(3.0, 3.0) == 1.0
    assert 50e12 / 5**5 > 100e9 / 5**3


# ---------------------------------------------------------------- blockade


def test_blockade_ok_examples():
    chk = it.blockade_ok(30e9, 1e9, 0.1e9)
    assert chk and chk.margin == pytest.approx(30)
    assert not it.blockade_ok(0.0, 1e9, 0.1e9)
    assert not it.blockade_ok(0.0, 0.0, 0.0)
    chk = it.blockade_ok(1.0001e9, 1e9, 0)
    assert chk and chk.margin == pytest.approx(1.0001)
    assert not it.blockade_ok(1e9, 1e9, 0)


@given(st.floats(0, 1e12), st.floats(0, 1e12), st.floats(1e6, 1e11), st.floats(0, 1e11))
def test_blockade_monotone(d1, extra, gL, gh):
    if it.blockade_ok(d1, gL, gh):
        assert it.blockade_ok(d1 + extra, gL, gh)


def test_cnot_shift_uses_both_target_lines():
    sch = load_scheme("Tm", 1)
    E = np.zeros((sch.dim, sch.dim))
    aux, zero, one = sch.index("1'"), sch.index("0"), sch.index("1")
    E[aux, aux] = 30e9
    assert it.cnot_shift(E, sch, sch) == pytest.approx(30e9)
    E[one, aux] = 25e9  # the 1<->1' line now only moves by 5 GHz
    assert it.cnot_shift(E, sch, sch) == pytest.approx(5e9)
    assert it.cnot_shift(None, sch, sch) == 0.0


# ---------------------------------------------------------------- spin and transfer


def test_exchange_and_magnetic():
    assert it.exchange_estimate(1) == 1.5
    assert it.exchange_estimate(1.4, decay=0.4) == pytest.approx(1.5 / math.e, rel=1e-14)
    assert it.exchange_estimate(10, decay=0.5) < 1e-7
    assert it.magnetic_dd_estimate(1) == 0.05
    assert it.magnetic_dd_estimate(2) == pytest.approx(0.05 / 8)
    assert it.magnetic_dd_estimate(10) == pytest.approx(0.05 / 1000)
    with pytest.raises(ValueError):
        it.exchange_estimate(0.5)


def test_transfer_rates():
    assert it.transfer_rate_motional(2.0, 0.0) == 2.0
    assert it.transfer_rate_motional(0.0, 5.0) == 0.0
    g = 1e6
    assert it.transfer_rate_motional(g, 100 * g) == pytest.approx(g**2 / (100 * g), rel=1e-4)
    assert it.forster_rate(1e6, 0.3, 1e9, 0.0, 1e9) == pytest.approx(1e12 * 0.09 / 1e9, rel=1e-14)
    assert it.forster_rate(1e6, 0.0, 1e9, 4.0, 1e9) == 0.0
    with pytest.raises(ValueError):
        it.forster_rate(1e6, 0.3, 1e9, 4.0, 0.0)


def test_forster_high_temperature_linear():
    delta = 1e9
    r1 = it.forster_rate(1e6, 0.3, delta, 100.0, 1e9)
    r2 = it.forster_rate(1e6, 0.3, delta, 200.0, 1e9)
    n1 = it.bose_occupation(delta, 100.0)
    assert n1 == pytest.approx(1.380649e-23 * 100 / (HBAR * 2 * math.pi * delta), rel=1e-3)
    assert r2 / r1 == pytest.approx(2.0, rel=1e-3)


# ---------------------------------------------------------------- moment model


def test_moments_from_u2():
    r0 = 0.1 * A**2
    zero = it.moments_from_u2("Tm", "1I6", "1I6", r0)
    assert zero.second == (0.0, 0.0, 0.0)
    m = it.moments_from_u2("Tm", "3F4", "1I6", r0)
    q = 1.5 * m.second[2]
    assert q == pytest.approx((math.sqrt(4.88) - math.sqrt(0.001)) * r0, rel=1e-12)
    assert q / r0 == pytest.approx(2.177, abs=1e-3)
    assert m.dr2 == pytest.approx(0.0, abs=1e-30)
    p = it.moments_from_u2("Pr", "1G4", "3H4", r0)
    assert 1.5 * p.second[2] == pytest.approx(math.sqrt(0.779) * r0, rel=1e-12)


def test_level_matrix_vanishes_for_zero_level():
    sch = load_scheme("Tm", 2)
    T = it.level_moment_tensors(sch, 0.1 * A**2)
    E = it.level_interaction_matrix(T, T, (3 * A, 0, 0), EPS)
    z = sch.index("0")
    assert np.all(E[z, :] == 0) and np.all(E[:, z] == 0)
    assert E[sch.index("1'"), sch.index("1'")] != 0


def test_pair_table_models():
    sch = load_scheme("Tm", 2)
    pos = np.array([[0, 0, 0], [3, 0, 0], [0, 4, 0]]) * A
    tens = it.pair_shift_table(pos, sch)
    est = it.pair_shift_table(pos, sch, model="estimate")
    aux = sch.index("1'")
    assert set(tens.energies) == {(0, 1), (0, 2), (1, 2)}
    du2 = (math.sqrt(sch.roles["1'"].u2_diag_sq) - math.sqrt(sch.roles["0"].u2_diag_sq)) ** 2
    assert est.matrix(0, 1)[aux, aux] == pytest.approx(
        it.quad_shift_estimate(du2, it.OMEGA0_BAR, 0.1 * A**2, 10, 3 * A), rel=1e-14)
    assert np.count_nonzero(est.matrix(0, 1)) == 1
    assert np.array_equal(tens.matrix(1, 0), tens.matrix(0, 1).T)
    assert tens.matrix(0, 5) is None
    cut = it.pair_shift_table(pos, sch, cutoff=3.5 * A)
    assert set(cut.energies) == {(0, 1)}
    with pytest.raises(ValueError):
        it.pair_shift_table(pos, sch, model="nope")


def test_dipole_near_crossover_warns():
    sch = load_scheme("Tm", 2)
    k = it.OMEGA0_BAR * 1.6 / 299792458.0
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        it.pair_shift_table(np.array([[0, 0, 0], [100, 0, 0]]) * A, sch,
                            dipole={"gamma0": 1e4, "k": k, "u2_ratio_sq": 1.0})
    assert any("crossover" in str(x.message) for x in w)


def test_write_pair_table(tmp_path):
    sch = load_scheme("Tm", 2)
    tab = it.pair_shift_table(np.array([[0, 0, 0], [3, 0, 0]]) * A, sch, model="estimate")
    it.write_pair_table(tmp_path / "p.csv", tab, 1e9, 0.0)
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0].startswith("id1,id2,R_over_a")
    assert lines[1].split(",")[2] == "3"
