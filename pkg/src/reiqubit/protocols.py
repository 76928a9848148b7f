"""Gate protocols built from pi pulses: preparation, CNOT/CCNOT, readout state."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .interactions import blockade_ok, cnot_shift
from .pulses import EnsembleState, PulseSpec, Register, apply_decay, apply_pulse


class AddressingCollision(ValueError):
    pass


class BlockadeRefused(ValueError):
    """Raised when a control-target pair does not satisfy the blockade condition."""

    def __init__(self, msg, margins):
        super().__init__(msg)
        self.margins = margins


@dataclass
class GatePlan:
    pulses: list
    controls: list
    target: int | None
    kind: str = "custom"
    shifts: dict = field(default_factory=dict)


@dataclass
class FidelityReport:
    fidelities: dict
    leakage: dict
    blockade_margin: float | None = None
    phases: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(list(self.fidelities.values())))

    @property
    def min(self) -> float:
        return float(np.min(list(self.fidelities.values())))

    def to_json(self) -> str:
        doc = {
            "fidelities": self.fidelities,
            "mean": self.mean,
            "min": self.min,
            "leakage": self.leakage,
            "blockade_margin": self.blockade_margin,
            "phases": self.phases,
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def _pulse(reg, i, role_a, role_b, gamma_L, theta=math.pi, phase=0.0, w_cut=None):
    return PulseSpec(
        reg.transition_hz(i, role_a, role_b), theta, phase, 1.0 / gamma_L, w_cut, (role_a, role_b), reg.ids[i]
    )


def check_addressing(reg: Register, pulses) -> None:
    """Every pulse must hit exactly its intended ion."""
    clashes = []
    for p in pulses:
        hit = [reg.ids[i] for i, *_ in reg.addressed(p)]
        others = [h for h in hit if h != p.ion_id]
        clashes.extend((p.ion_id, o) for o in others)
    if clashes:
        pairs = sorted({tuple(sorted(c)) for c in clashes})
        raise AddressingCollision(f"addressing collision between ion pairs {pairs}")


def prepare_zero(ions, reg: Register, gamma_L: float = 1e9, w_cut=None) -> list:
    """One pi pulse per ion on g -> 0 (1' -> 0 when g is the auxiliary level)."""
    pulses = [_pulse(reg, reg.ids.index(m), "g", "0", gamma_L, w_cut=w_cut) for m in ions]
    check_addressing(reg, pulses)
    return pulses


def blockade_shift(reg: Register, target: int, control: int) -> float:
    """Smallest shift of the target's 0<->1' and 1<->1' lines caused by parking the control in 1'."""
    if reg.pair_table is None:
        return 0.0
    return cnot_shift(reg.pair_table.matrix(target, control), reg.schemes[target], reg.schemes[control])


def ccnot_plan(controls, target, reg: Register, gamma_L: float = 1e9, gamma_h: float = 0.0, w_cut=None,
               enforce_blockade: bool = True) -> GatePlan:
    """Park every control on 0 -> 1', run the three-pulse target NOT, unpark in reverse order.

    ``enforce_blockade=False`` builds the plan even when the blockade condition
    fails (used to show that conditionality disappears); margins are still recorded.
    """
    controls = list(controls)
    if target in controls:
        raise ValueError("control and target must be different ions")
    if len(set(controls)) != len(controls) or not controls:
        raise ValueError("controls must be distinct and non-empty")
    ti = reg.ids.index(target)
    cis = [reg.ids.index(c) for c in controls]
    margins = {}
    for c, ci in zip(controls, cis):
        d = blockade_shift(reg, ti, ci)
        chk = blockade_ok(d, gamma_L, gamma_h)
        margins[c] = chk.margin
        if enforce_blockade and not chk:
            raise BlockadeRefused(
                f"blockade condition fails for control {c} / target {target}: margin {chk.margin:.3g}",
                margins,
            )
    pulses = [_pulse(reg, ci, "0", "1'", gamma_L, w_cut=w_cut) for ci in cis]
    pulses += [
        _pulse(reg, ti, "0", "1'", gamma_L, w_cut=w_cut),
        _pulse(reg, ti, "1'", "1", gamma_L, w_cut=w_cut),
        _pulse(reg, ti, "0", "1'", gamma_L, w_cut=w_cut),
    ]
    pulses += [_pulse(reg, ci, "1'", "0", gamma_L, w_cut=w_cut) for ci in reversed(cis)]
    check_addressing(reg, pulses)
    for p, ci in zip(pulses[: len(cis)], cis):
        # a control sitting in |1> must stay outside the parking pulse's window
        miss = abs(reg.transition_hz(ci, "1", "1'") - p.carrier)
        if miss <= p.w_cut:
            raise AddressingCollision(
                f"control {reg.ids[ci]}: 1<->1' line is within the addressing window of its parking pulse"
            )
    kind = "cnot" if len(controls) == 1 else "ccnot"
    return GatePlan(pulses, controls, target, kind, margins)


def cnot_plan(control, target, reg: Register, gamma_L: float = 1e9, gamma_h: float = 0.0, w_cut=None,
              enforce_blockade: bool = True) -> GatePlan:
    """Five pi pulses: park control, 0<->1', 1'<->1, 0<->1' on the target, unpark control."""
    if control == target:
        raise ValueError("control and target must be different ions")
    return ccnot_plan([control], target, reg, gamma_L, gamma_h, w_cut, enforce_blockade)


def execute(plan, state: EnsembleState, reg: Register, decay: bool = True) -> EnsembleState:
    pulses = plan.pulses if isinstance(plan, GatePlan) else plan
    for p in pulses:
        state = apply_pulse(state, p, reg)
        if decay:
            state = apply_decay(state, p.duration, reg)
    return state


def ideal_controlled_not(n_controls: int) -> np.ndarray:
    """Permutation matrix flipping the last qubit iff all controls are 1 (controls most significant)."""
    n = n_controls + 1
    dim = 2**n
    U = np.zeros((dim, dim))
    for bits in itertools.product((0, 1), repeat=n):
        out = list(bits)
        if all(bits[:-1]):
            out[-1] ^= 1
        src = int("".join(map(str, bits)), 2)
        dst = int("".join(map(str, out)), 2)
        U[dst, src] = 1.0
    return U


PLUS = np.array([1, 1]) / math.sqrt(2)
DEFAULT_INPUTS = {
    "00": (np.array([1, 0]), np.array([1, 0])),
    "01": (np.array([1, 0]), np.array([0, 1])),
    "10": (np.array([0, 1]), np.array([1, 0])),
    "11": (np.array([0, 1]), np.array([0, 1])),
    "+0": (PLUS, np.array([1, 0])),
    "++": (PLUS, PLUS),
}


def embed_qubits(reg: Register, order, qubit_vectors) -> EnsembleState:
    """Product state with each listed ion in a|0> + b|1>; unlisted ions in their |0> level."""
    vecs = []
    for i, sch in enumerate(reg.schemes):
        v = np.zeros(sch.dim, dtype=complex)
        if reg.ids[i] in order:
            a, b = qubit_vectors[order.index(reg.ids[i])]
            v[sch.index("0")] = a
            v[sch.index("1")] = b
        else:
            v[sch.index("0")] = 1.0
        vecs.append(v)
    return EnsembleState.product(vecs)


def project_qubits(state: EnsembleState, reg: Register, order) -> np.ndarray:
    """Amplitudes on the computational subspace of ``order`` (other ions traced in |0>)."""
    psi = state.psi.reshape(state.dims)
    idx = []
    for i, sch in enumerate(reg.schemes):
        if reg.ids[i] in order:
            idx.append(None)
        else:
            idx.append(sch.index("0"))
    sub = psi[tuple(slice(None) if k is None else k for k in idx)]
    # axes of ``sub`` follow register order; pick 0/1 levels and reorder to ``order``
    reg_order = [reg.ids[i] for i, k in enumerate(idx) if k is None]
    qi = [i for i, k in enumerate(idx) if k is None]
    for ax, i in enumerate(qi):
        sch = reg.schemes[i]
        sub = np.take(sub, [sch.index("0"), sch.index("1")], axis=ax)
    perm = [reg_order.index(m) for m in order]
    return np.transpose(sub, perm).reshape(-1)


def gate_fidelity(simulate, ideal: np.ndarray, inputs: dict | None = None, n_qubits: int = 2,
                  blockade_margin=None) -> FidelityReport:
    """Overlap fidelities |<ideal|sim>|^2 on the computational subspace.

    ``simulate`` maps a list of per-qubit vectors to ``(projected amplitudes, leakage)``.
    """
    inputs = DEFAULT_INPUTS if inputs is None else inputs
    if ideal.shape != (2**n_qubits, 2**n_qubits):
        raise ValueError(f"ideal gate shape {ideal.shape} does not match {n_qubits} qubits")
    fids, leaks, phases = {}, {}, {}
    for name, vecs in inputs.items():
        if len(vecs) != n_qubits:
            raise ValueError(f"input {name!r} has {len(vecs)} qubits, expected {n_qubits}")
        psi_in = np.array([1.0 + 0j])
        for v in vecs:
            psi_in = np.kron(psi_in, v)
        target = ideal @ psi_in
        amp, leak = simulate(list(vecs))
        if amp.shape != target.shape:
            raise ValueError("simulated amplitudes have the wrong dimension")
        ov = np.vdot(target, amp)
        fids[name] = float(min(1.0, abs(ov) ** 2))
        phases[name] = float(np.angle(ov)) if abs(ov) > 1e-12 else 0.0
        leaks[name] = float(leak)
    return FidelityReport(fids, leaks, blockade_margin, phases)


def plan_simulator(plan: GatePlan, reg: Register, decay: bool = True):
    order = list(plan.controls) + [plan.target]

    def run(vecs):
        st = embed_qubits(reg, order, vecs)
        out = execute(plan, st, reg, decay)
        amp = project_qubits(out, reg, order)
        leak = 1.0 - float(np.vdot(amp, amp).real)
        return amp, leak

    return run


def hadamard_readout_state(phases) -> dict:
    """Populations cos^2(phi/2), sin^2(phi/2) and the normalized product state."""
    p0 = [math.cos(p / 2) ** 2 for p in phases]
    p1 = [math.sin(p / 2) ** 2 for p in phases]
    psi = np.array([1.0 + 0j])
    for p in phases:
        e = np.exp(1j * p)
        psi = np.kron(psi, np.array([1 + e, 1 - e]) / 2)
    return {"p0": p0, "p1": p1, "state": psi}
