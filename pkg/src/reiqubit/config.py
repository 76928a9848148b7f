"""Run configuration: one YAML tree, every default written back into the effective dump."""

from __future__ import annotations

import json
import math
import platform
import sys
import time
import types
import typing
from dataclasses import asdict, dataclass, field, fields, is_dataclass

import numpy as np
import yaml

from . import __version__
from .ensemble import CrystalConfig
from .ion_data import ROLES, default_db


@dataclass
class IonConfig:
    name: str = "Pr"
    scheme: int = 0


@dataclass
class PulseConfig:
    gamma_L: float = 1e9  # s^-1
    theta: float = math.pi
    w_cut: float | None = None  # Hz; None -> 5 gamma_L
    gamma0: float = 1.8e4  # s^-1, radiative rate of the driven line
    roles: list = field(default_factory=lambda: ["g", "1"])
    area_cm2: float = 1e-4  # beam cross-section for the pulse-energy figure


@dataclass
class ShiftsConfig:
    model: str = "tensor"  # tensor | estimate
    cutoff_a: float | None = 10.0
    max_ions: int = 200


@dataclass
class ProtocolConfig:
    gate: str = "cnot"  # cnot | ccnot
    controls: list = field(default_factory=lambda: [0])
    target: int = 1
    pair_model: str = "blockade"  # blockade | estimate | tensor
    blockade_hz: float = 30e9  # (1', 1') shift for the blockade model
    spacing_a: float = 3.0  # lattice spacing between neighbouring ions along x
    line_spacing_hz: float = 50e9  # inhomogeneous offset step between ions
    gamma_h: float = 0.0
    decay: bool = True
    scheme_ion: str = "Tm"
    scheme: int = 1


@dataclass
class BurnConfig:
    n_ions: int = 200
    scheme_ion: str = "Tm"
    scheme: int = 2
    gamma_h: float = 5e8  # Hz
    burn_ion: int = 0
    model: str = "estimate"
    gap: float = 100.0
    N: int = 50
    margin: float = 3.0
    k: int = 1
    noise: float | None = None


@dataclass
class ReadoutConfig:
    phases: list = field(default_factory=lambda: [0.0, math.pi / 2, math.pi])
    gamma_h: float = 1e6
    line_spacing_hz: float = 5e9


@dataclass
class RunConfig:
    crystal: CrystalConfig = field(default_factory=CrystalConfig)
    ion: IonConfig = field(default_factory=IonConfig)
    pulse: PulseConfig = field(default_factory=PulseConfig)
    shifts: ShiftsConfig = field(default_factory=ShiftsConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    burn: BurnConfig = field(default_factory=BurnConfig)
    readout: ReadoutConfig = field(default_factory=ReadoutConfig)
    temperature: float = 4.0  # K
    seed: int = 0
    box_edge: int = 20
    out: str = "out"

    def validate(self) -> "RunConfig":
        self.crystal.validate("crystal")
        db = default_db()
        try:
            db.load_scheme(self.ion.name, self.ion.scheme)
        except KeyError as e:
            raise ValueError(f"ion: {e}") from None
        p = self.pulse
        _req(p.gamma_L > 0, "pulse.gamma_L", "must be > 0", p.gamma_L)
        _req(p.gamma0 > 0, "pulse.gamma0", "must be > 0", p.gamma0)
        _req(p.area_cm2 > 0, "pulse.area_cm2", "must be > 0", p.area_cm2)
        _req(p.w_cut is None or p.w_cut > 0, "pulse.w_cut", "must be > 0 or null", p.w_cut)
        _req(len(p.roles) == 2 and all(r in ROLES for r in p.roles), "pulse.roles",
             f"must be two of {list(ROLES)}", p.roles)
        s = self.shifts
        _req(s.model in ("tensor", "estimate"), "shifts.model", "must be tensor|estimate", s.model)
        _req(s.cutoff_a is None or s.cutoff_a > 0, "shifts.cutoff_a", "must be > 0 or null", s.cutoff_a)
        _req(s.max_ions >= 2, "shifts.max_ions", "must be >= 2", s.max_ions)
        g = self.protocol
        _req(g.gate in ("cnot", "ccnot"), "protocol.gate", "must be cnot|ccnot", g.gate)
        _req(g.pair_model in ("blockade", "estimate", "tensor"), "protocol.pair_model",
             "must be blockade|estimate|tensor", g.pair_model)
        n_ctrl = 1 if g.gate == "cnot" else 2
        _req(len(g.controls) == n_ctrl, "protocol.controls", f"{g.gate} needs {n_ctrl} control(s)", g.controls)
        ids = list(g.controls) + [g.target]
        _req(len(set(ids)) == len(ids), "protocol.target", "must differ from every control", ids)
        _req(all(0 <= i < n_ctrl + 1 for i in ids), "protocol.controls",
             f"ion ids must lie in 0..{n_ctrl}", ids)
        _req(g.spacing_a > 0, "protocol.spacing_a", "must be > 0", g.spacing_a)
        _req(g.blockade_hz >= 0, "protocol.blockade_hz", "must be >= 0", g.blockade_hz)
        _req(g.gamma_h >= 0, "protocol.gamma_h", "must be >= 0", g.gamma_h)
        _check_scheme(db, g.scheme_ion, g.scheme, "protocol")
        b = self.burn
        _check_scheme(db, b.scheme_ion, b.scheme, "burn")
        _req(b.n_ions >= 2, "burn.n_ions", "must be >= 2", b.n_ions)
        _req(0 <= b.burn_ion < b.n_ions, "burn.burn_ion", "must index an ion", b.burn_ion)
        _req(b.gamma_h > 0, "burn.gamma_h", "must be > 0", b.gamma_h)
        _req(b.model in ("tensor", "estimate"), "burn.model", "must be tensor|estimate", b.model)
        _req(b.gap > 0, "burn.gap", "must be > 0", b.gap)
        _req(b.N >= 1, "burn.N", "must be >= 1", b.N)
        _req(b.margin > 0, "burn.margin", "must be > 0", b.margin)
        _req(b.k >= 1, "burn.k", "must be >= 1", b.k)
        _req(b.noise is None or b.noise >= 0, "burn.noise", "must be >= 0 or null", b.noise)
        r = self.readout
        _req(len(r.phases) >= 1, "readout.phases", "must be non-empty", r.phases)
        _req(r.gamma_h > 0, "readout.gamma_h", "must be > 0", r.gamma_h)
        _req(r.line_spacing_hz > 20 * r.gamma_h, "readout.line_spacing_hz", "must exceed 20 gamma_h",
             r.line_spacing_hz)
        _req(self.temperature > 0, "temperature", "must be > 0", self.temperature)
        _req(0 <= self.seed < 2**64, "seed", "must be a u64", self.seed)
        _req(self.box_edge >= 2, "box_edge", "must be >= 2", self.box_edge)
        return self


def _req(ok, path, msg, value):
    if not ok:
        raise ValueError(f"{path} {msg} (got {value!r})")


def _check_scheme(db, ion, scheme, section):
    try:
        db.load_scheme(ion, scheme)
    except KeyError as e:
        raise ValueError(f"{section}.scheme: {e}") from None


_NUMERIC = (int, float)


def _coerce(value, tp, path):
    """Type-check one leaf against its annotation (str, int, float, bool, list, optional)."""
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        tp = next(a for a in args if a is not type(None))
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, _NUMERIC):
            raise ValueError(f"{path} must be a number (got {value!r})")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{path} must be an integer (got {value!r})")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ValueError(f"{path} must be true or false (got {value!r})")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ValueError(f"{path} must be a string (got {value!r})")
        return value
    if tp is list:
        if not isinstance(value, list):
            raise ValueError(f"{path} must be a list (got {value!r})")
        return value
    return value


def _build(cls, data, prefix=""):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValueError(f"{prefix or 'config'} must be a mapping (got {data!r})")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown field {prefix + unknown[0]}")
    kw = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        path = prefix + f.name
        tp = hints[f.name]
        if is_dataclass(tp):
            kw[f.name] = _build(tp, data[f.name], path + ".")
        else:
            kw[f.name] = _coerce(data[f.name], tp, path)
    if cls is CrystalConfig:
        # CrystalConfig validates in __post_init__; re-raise with the section path
        try:
            return cls(**kw)
        except ValueError as e:
            msg = str(e)
            raise ValueError(msg if msg.startswith("crystal.") else f"crystal.{msg}") from None
    return cls(**kw)


def from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data).validate()


def load(path=None, overrides: dict | None = None) -> RunConfig:
    data = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return from_dict(data)


def to_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)


def dump(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(to_dict(cfg), fh, sort_keys=True, default_flow_style=False)


def jsonable(obj):
    """Plain JSON types; inf/nan become null, numpy scalars and arrays become Python values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if is_dataclass(obj):
        return jsonable(asdict(obj))
    return obj


def dumps(doc) -> str:
    return json.dumps(jsonable(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_metadata(path, command: str, argv, runtime_s: float) -> None:
    """Timestamps and host details live here, never in the reports themselves."""
    meta = {
        "command": command,
        "argv": list(argv),
        "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(time.time() - runtime_s)),
        "runtime_s": runtime_s,
        "version": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(meta))
