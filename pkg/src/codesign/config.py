"""Experiment configuration: TOML, INI or JSON in, one validated dataclass out."""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .circuits import ISWAP_DEVICE_NAMES, PhysicalConstants
from .diffkit import ParamVector
from .evolution import SolverConfig
from .objectives import (
    CHIP_NAMES,
    ISWAP_NAMES,
    ISWAP_UNITS,
    CphaseProblem,
    IswapProblem,
    PenaltyConstants,
    chip_param_vector,
)
from .optimize import AdamConfig
from .spectral import SearchConfig
from .tables import CHIP_TABLES, ISWAP_TABLES

KINDS = ("iswap", "iswap-robust", "cphase-chip", "scan", "bench", "gradcheck", "demo")
ISWAP_KINDS = ("iswap", "iswap-robust", "scan", "gradcheck")

# optimizer defaults per kind (the CPhase chip runs at a small constant rate)
OPTIMIZER_DEFAULTS = {
    "iswap": {"r_init": 0.003, "decay_halflife_steps": 5000.0},
    "iswap-robust": {"r_init": 0.004, "decay_halflife_steps": 5000.0},
    "cphase-chip": {"r_init": 8e-5, "decay_halflife_steps": None},
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending section/key (and line when known)."""


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt_float(v):
    if v is None or str(v).strip().lower() in ("none", "null", ""):
        return None
    return float(v)


def _int(v):
    if isinstance(v, bool):
        raise ValueError("boolean is not an integer")
    f = float(v)
    if f != int(f):
        raise ValueError(f"not an integer: {v!r}")
    return int(f)


def _int_list(v):
    if isinstance(v, (list, tuple)):
        return [_int(i) for i in v]
    s = str(v).strip().strip("[]")
    return [_int(p) for p in s.replace(",", " ").split()]


_CONSTANT_FIELDS = {n: float for n in ("delta", "c_fdiff", "c_fm1", "c_fm2", "c_zz1", "c_zz2", "c_tm", "c_ah1", "c_ah2", "c_fdiff1", "c_fdiff2", "c_scale")}

SCHEMA = {
    "run": {"kind": str, "seed": _int, "table": str, "target": str},
    "device": {n: float for n in ISWAP_DEVICE_NAMES + CHIP_NAMES},
    "control": {"t_ramp": float, "t_plateau": float, "phi_p": float},
    "optimizer": {
        "r_init": float,
        "decay_halflife_steps": _opt_float,
        "b1": float,
        "b2": float,
        "eps": float,
        "steps": _int,
        "snapshot_every": _int,
    },
    "solver": {"dt": float, "unitarity_check_tol": float, "checkpoint_every": _int, "frame": str},
    "constants": dict(_CONSTANT_FIELDS, tan_delta_c=float, temperature=float, c_f=float),
    "robust": {"delta_phi_p": float},
    "scan": {"delta_range": str, "param": str},
    "bench": {"chain": _int_list, "levels": _int, "repeats": _int, "check": _bool},
    "cphase": {"m": float, "gate_form": str, "search_step": float},
    "gradcheck": {"rel_tol": float, "abs_floor": float},
}


def parse_delta_range(spec: str):
    """'a:b:n' -> n evenly spaced offsets from a to b inclusive."""
    import numpy as np

    try:
        a, b, n = spec.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError as exc:
        raise ConfigError(f"delta range must look like a:b:n, got {spec!r}") from exc
    if n < 1:
        raise ConfigError(f"delta range needs n >= 1, got {n}")
    return [float(v) for v in np.linspace(a, b, n)]


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    table: str | None = None
    target: str | None = None
    device: dict = field(default_factory=dict)
    control: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    robust: dict = field(default_factory=dict)
    scan: dict = field(default_factory=dict)
    bench: dict = field(default_factory=dict)
    cphase: dict = field(default_factory=dict)
    gradcheck: dict = field(default_factory=dict)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if "config" in raw and isinstance(raw["config"], dict):
            raw = raw["config"]  # a result.json
        raw = dict(raw)
        run = dict(raw.pop("run", {}) or {})
        for key in list(raw):
            if not isinstance(raw[key], dict):
                run[key] = raw.pop(key)
        sections = {"run": run}
        for name, body in raw.items():
            if name not in SCHEMA:
                raise ConfigError(f"unknown section [{name}]")
            sections[name] = body
        typed = {}
        for name, body in sections.items():
            schema = SCHEMA[name]
            out = {}
            for key, val in body.items():
                if key not in schema:
                    raise ConfigError(f"unknown key {name}.{key}")
                try:
                    out[key] = schema[key](val)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"bad value for {name}.{key}: {val!r} ({exc})") from exc
            typed[name] = out
        run = typed.pop("run")
        if "kind" not in run:
            raise ConfigError("missing key run.kind")
        cfg = cls(
            kind=run["kind"],
            seed=run.get("seed", 0),
            table=run.get("table"),
            target=run.get("target"),
            **typed,
        )
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        out = {"run": {"kind": self.kind, "seed": self.seed}}
        if self.table is not None:
            out["run"]["table"] = self.table
        if self.target is not None:
            out["run"]["target"] = self.target
        for name in SCHEMA:
            if name != "run":
                body = getattr(self, name)
                if body:
                    out[name] = dict(body)
        return out

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"run.kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind in ISWAP_KINDS or self.kind == "cphase-chip":
            self.params()  # raises on missing / invalid keys
        if self.target is not None and self.target not in ("iswap", "robust", "chip"):
            raise ConfigError(f"run.target must be iswap, robust or chip, got {self.target!r}")
        if "frame" in self.solver and self.solver["frame"] not in ("dressed", "bare"):
            raise ConfigError(f"solver.frame must be 'dressed' or 'bare', got {self.solver['frame']!r}")
        if "gate_form" in self.cphase and self.cphase["gate_form"] not in ("reciprocal", "literal"):
            raise ConfigError(f"cphase.gate_form must be 'reciprocal' or 'literal', got {self.cphase['gate_form']!r}")
        if "delta_range" in self.scan:
            parse_delta_range(self.scan["delta_range"])
        for n in self.bench.get("chain", []):
            if not 3 <= n <= 6:
                raise ConfigError(f"bench.chain entries must lie in 3..6, got {n}")
        for builder, section in (
            (self.adam_config, "optimizer"),
            (self.solver_config, "solver"),
            (self.penalties, "constants"),
        ):
            try:
                builder()
            except ValueError as exc:
                raise ConfigError(f"[{section}] {exc}") from exc

    def _uses_chip(self) -> bool:
        return self.kind == "cphase-chip" or self.target == "chip"

    def params(self) -> ParamVector:
        """Parameters from ``run.table`` overlaid with explicit device/control keys."""
        if self._uses_chip():
            base = {}
            if self.table is not None:
                if self.table not in CHIP_TABLES:
                    raise ConfigError(f"run.table must be one of {tuple(CHIP_TABLES)} for the CPhase chip, got {self.table!r}")
                base = dict(CHIP_TABLES[self.table])
            extra = set(self.device) - set(CHIP_NAMES)
            if extra or self.control:
                raise ConfigError(f"keys not used by the CPhase chip: {sorted(extra | set(self.control))}")
            base.update(self.device)
            missing = [n for n in CHIP_NAMES if n not in base]
            if missing:
                raise ConfigError(f"missing key device.{missing[0]}")
            for n in CHIP_NAMES:
                if not base[n] > 0:
                    raise ConfigError(f"device.{n} must be positive, got {base[n]}")
            return chip_param_vector(base)
        base = {}
        if self.table is not None:
            if self.table not in ISWAP_TABLES:
                raise ConfigError(f"run.table must be one of {tuple(ISWAP_TABLES)}, got {self.table!r}")
            base = dict(ISWAP_TABLES[self.table])
        extra = set(self.device) - set(ISWAP_DEVICE_NAMES)
        if extra:
            raise ConfigError(f"key device.{sorted(extra)[0]} is not an iSWAP device parameter")
        base.update(self.device)
        base.update(self.control)
        missing = [n for n in ISWAP_NAMES if n not in base]
        if missing:
            section = "device" if missing[0] in ISWAP_DEVICE_NAMES else "control"
            raise ConfigError(f"missing key {section}.{missing[0]}")
        for n in ISWAP_DEVICE_NAMES + ("t_ramp",):
            if not base[n] > 0:
                raise ConfigError(f"{'device' if n != 't_ramp' else 'control'}.{n} must be positive, got {base[n]}")
        if base["t_plateau"] < 0:
            raise ConfigError(f"control.t_plateau must be >= 0, got {base['t_plateau']}")
        return ParamVector(ISWAP_NAMES, [base[n] for n in ISWAP_NAMES], ISWAP_UNITS)

    # -- typed views -------------------------------------------------------

    def adam_config(self) -> AdamConfig:
        kw = dict(OPTIMIZER_DEFAULTS.get(self.kind, {}))
        kw.update(self.optimizer)
        return AdamConfig(**kw)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**{k: v for k, v in self.solver.items() if k != "frame"})

    def penalties(self) -> PenaltyConstants:
        phys = {k: self.constants[k] for k in ("tan_delta_c", "temperature", "c_f") if k in self.constants}
        rest = {k: v for k, v in self.constants.items() if k not in phys}
        return PenaltyConstants(physical=PhysicalConstants(**phys), **rest)

    def iswap_problem(self) -> IswapProblem:
        return IswapProblem(self.penalties(), self.solver_config(), frame=self.solver.get("frame", "dressed"))

    def cphase_problem(self) -> CphaseProblem:
        search = SearchConfig(step=self.cphase["search_step"]) if "search_step" in self.cphase else SearchConfig()
        return CphaseProblem(
            self.penalties(),
            search,
            self.cphase.get("m", 0.8),
            self.cphase.get("gate_form", "reciprocal"),
        )


def _ini_to_dict(text: str, path: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep E_C1 etc. case sensitive
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return {s: dict(parser.items(s)) for s in parser.sections()}


def load_config(path) -> ExperimentConfig:
    """Read a .toml, .ini/.cfg or .json config (a result.json is accepted too)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    suffix = path.suffix.lower()
    try:
        if suffix == ".toml":
            raw = tomli.loads(text)
        elif suffix == ".json":
            raw = json.loads(text)
        elif suffix in (".ini", ".cfg"):
            raw = _ini_to_dict(text, str(path))
        else:
            raise ConfigError(f"{path}: unknown config format {suffix!r} (use .toml, .ini or .json)")
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    try:
        return ExperimentConfig.from_dict(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
