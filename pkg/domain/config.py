# domain/config.py
# -*- coding: utf-8 -*-
"""
Run configuration: an INI file with sections [domain], [coefficients],
[grid], [ensemble], [experiment] and [output], overridden by environment
variables MOVLAB_<SECTION>__<KEY> and then by command-line flags.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Tuple

from domain.errors import ConfigError
from domain.models import ETA1_MAX

ENV_PREFIX = "MOVLAB_"
SECTIONS = ("domain", "coefficients", "grid", "ensemble", "experiment", "output")
REFERENCES = ("interval", "disk", "star", "lshape")
MOTIONS = ("identity", "dilation", "translation", "endpoint", "radial", "wave")
THETA_CHOICES = (0.5, 1.0)


def _floats(text: str, what: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{what}: expected a comma-separated list of numbers, got {text!r}.") from exc


def _number(raw: str, what: str) -> float:
    try:
        v = float(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: expected a number, got {raw!r}.") from exc
    if not math.isfinite(v):
        raise ConfigError(f"{what}: must be finite.")
    return v


def _int(raw: str, what: str) -> int:
    try:
        return int(str(raw).strip())
    except ValueError as exc:
        raise ConfigError(f"{what}: expected an integer, got {raw!r}.") from exc


def _bool(raw: str, what: str) -> bool:
    s = str(raw).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"{what}: expected a boolean, got {raw!r}.")


def _range(v: float, lo: float, hi: float, what: str, lo_open: bool = False) -> float:
    if (v <= lo if lo_open else v < lo) or v > hi:
        raise ConfigError(f"{what} = {v!r} is outside {'(' if lo_open else '['}{lo}, {hi}].")
    return v


@dataclass(frozen=True)
class DomainSpec:
    reference: str = "interval"
    length: float = 1.0
    center: Tuple[float, ...] = (0.0, 0.0)
    harmonics: str = ""
    gamma_arc: Tuple[float, float] = (-math.pi / 4, math.pi / 4)
    motion: str = "identity"
    horizon: float = 1.0
    R0: float = 0.25
    E: float = 2.0
    rho0: float = 0.2
    alpha: float = math.pi / 6
    eta1: float = 0.3

    @property
    def dim(self) -> int:
        return 1 if self.reference == "interval" else 2

    @property
    def motion_name(self) -> str:
        return self.motion.split()[0] if self.motion.strip() else "identity"


@dataclass(frozen=True)
class CoefficientSpec:
    a1: str = "zero"
    b1: str = "zero"
    c1: str = "zero"
    f: str = "constant value=1"
    u0: str = "zero"
    F: float = 1.0
    kappa0: float = math.e


@dataclass(frozen=True)
class GridSpec:
    cells: int = 128
    steps: int = 512
    stride: int = 16
    theta: float = 0.5


@dataclass(frozen=True)
class EnsembleSpec:
    seed: int = 0
    samples: int = 100
    threads: int = 0

    @property
    def workers(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)


@dataclass(frozen=True)
class ExperimentSpec:
    """Subcommand parameters kept as text; typed by the accessors."""

    params: Tuple[Tuple[str, str], ...] = ()

    def _raw(self, key: str) -> Optional[str]:
        for k, v in self.params:
            if k == key:
                return v
        return None

    def has(self, key: str) -> bool:
        return self._raw(key) is not None

    def number(self, key: str, default: float) -> float:
        raw = self._raw(key)
        return float(default) if raw is None else _number(raw, f"experiment.{key}")

    def integer(self, key: str, default: int) -> int:
        raw = self._raw(key)
        return int(default) if raw is None else _int(raw, f"experiment.{key}")

    def numbers(self, key: str, default: Tuple[float, ...] = ()) -> Tuple[float, ...]:
        raw = self._raw(key)
        return tuple(default) if raw is None else _floats(raw, f"experiment.{key}")

    def text(self, key: str, default: str = "") -> str:
        raw = self._raw(key)
        return default if raw is None else raw.strip()

    def words(self, key: str, default: Tuple[str, ...] = ()) -> Tuple[str, ...]:
        raw = self._raw(key)
        if raw is None:
            return tuple(default)
        return tuple(w.strip() for w in raw.replace(";", ",").split(",") if w.strip())

    def flag(self, key: str, default: bool = False) -> bool:
        raw = self._raw(key)
        return default if raw is None else _bool(raw, f"experiment.{key}")


@dataclass(frozen=True)
class OutputSpec:
    out: str = "movlab-out"
    ledger: str = ""
    write_paths: bool = False
    gate: bool = False


@dataclass(frozen=True)
class RunConfig:
    domain: DomainSpec = field(default_factory=DomainSpec)
    coefficients: CoefficientSpec = field(default_factory=CoefficientSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    source: str = ""

    def to_dict(self) -> Dict[str, object]:
        d = asdict(self)
        d.pop("source", None)
        d["experiment"] = {k: v for k, v in self.experiment.params}
        return d

    def canonical_json(self) -> str:
        d = self.to_dict()
        d["ensemble"].pop("threads", None)
        d["output"].pop("out", None)
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def with_overrides(self, seed: Optional[int] = None, samples: Optional[int] = None,
                       threads: Optional[int] = None, out: Optional[str] = None,
                       ledger: Optional[str] = None) -> "RunConfig":
        ens = self.ensemble
        if seed is not None:
            ens = replace(ens, seed=_check_seed(int(seed)))
        if samples is not None:
            if samples < 1:
                raise ConfigError("--samples must be >= 1.")
            ens = replace(ens, samples=int(samples))
        if threads is not None:
            if threads < 0:
                raise ConfigError("--threads must be >= 0.")
            ens = replace(ens, threads=int(threads))
        outp = self.output
        if out is not None:
            outp = replace(outp, out=str(out))
        if ledger is not None:
            outp = replace(outp, ledger=str(ledger))
        return replace(self, ensemble=ens, output=outp)

    def provenance(self, code_version: str) -> Dict[str, object]:
        return {
            "config_hash": self.config_hash,
            "seed": self.ensemble.seed,
            "grid": f"cells={self.grid.cells},steps={self.grid.steps},stride={self.grid.stride}",
            "code_version": code_version,
        }


def _check_seed(seed: int) -> int:
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be a 64-bit unsigned integer.")
    return seed


def apply_env_overrides(parser: configparser.ConfigParser, env: Mapping[str, str]) -> List[str]:
    """MOVLAB_<SECTION>__<KEY>=value; returns the applied keys."""
    applied = []
    for name, value in sorted(env.items()):
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        section, key = name[len(ENV_PREFIX):].split("__", 1)
        section = section.lower()
        if section not in SECTIONS:
            raise ConfigError(f"Environment override {name} names unknown section {section!r}.")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key.lower(), value)
        applied.append(f"{section}.{key.lower()}")
    return applied


def _domain(sec: Mapping[str, str]) -> DomainSpec:
    d = DomainSpec()
    ref = sec.get("reference", d.reference).strip()
    if ref not in REFERENCES:
        raise ConfigError(f"domain.reference must be one of {REFERENCES}, got {ref!r}.")
    motion = sec.get("motion", d.motion).strip() or "identity"
    if motion.split()[0] not in MOTIONS:
        raise ConfigError(f"domain.motion must start with one of {MOTIONS}, got {motion!r}.")
    center = _floats(sec.get("center", "0,0" if ref != "interval" else "0"), "domain.center")
    arc = _floats(sec["gamma_arc"], "domain.gamma_arc") if "gamma_arc" in sec else d.gamma_arc
    if len(arc) != 2:
        raise ConfigError("domain.gamma_arc needs two angles.")
    spec = DomainSpec(
        reference=ref,
        length=_range(_number(sec.get("length", d.length), "domain.length"), 0, 1e6, "domain.length", True),
        center=center,
        harmonics=sec.get("harmonics", "").strip(),
        gamma_arc=(arc[0], arc[1]),
        motion=motion,
        horizon=_range(_number(sec.get("horizon", d.horizon), "domain.horizon"), 0, 1e6, "domain.horizon", True),
        R0=_range(_number(sec.get("r0", d.R0), "domain.R0"), 0, 1e6, "domain.R0", True),
        E=_range(_number(sec.get("e", d.E), "domain.E"), 1, 1e6, "domain.E"),
        rho0=_range(_number(sec.get("rho0", d.rho0), "domain.rho0"), 0, 1e6, "domain.rho0", True),
        alpha=_range(_number(sec.get("alpha", d.alpha), "domain.alpha"), 0, math.pi / 4, "domain.alpha", True),
        eta1=_range(_number(sec.get("eta1", d.eta1), "domain.eta1"), 0, ETA1_MAX - 1e-12, "domain.eta1", True),
    )
    if spec.motion_name == "endpoint" and ref != "interval":
        raise ConfigError("endpoint motion needs the interval reference.")
    if spec.motion_name in ("radial", "wave") and ref == "interval":
        raise ConfigError(f"{spec.motion_name} motion needs a planar reference.")
    return spec


def _coefficients(sec: Mapping[str, str]) -> CoefficientSpec:
    c = CoefficientSpec()
    kappa0 = _number(sec.get("kappa0", c.kappa0), "coefficients.kappa0")
    if kappa0 < math.e:
        raise ConfigError("coefficients.kappa0 must be >= e.")
    return CoefficientSpec(
        a1=sec.get("a1", c.a1).strip(),
        b1=sec.get("b1", c.b1).strip(),
        c1=sec.get("c1", c.c1).strip(),
        f=sec.get("f", c.f).strip(),
        u0=sec.get("u0", c.u0).strip(),
        F=_range(_number(sec.get("f_bound", c.F), "coefficients.f_bound"), 0, 1e12, "coefficients.f_bound"),
        kappa0=kappa0,
    )


def _grid(sec: Mapping[str, str]) -> GridSpec:
    g = GridSpec()
    cells = _int(sec.get("cells", g.cells), "grid.cells")
    steps = _int(sec.get("steps", g.steps), "grid.steps")
    stride = _int(sec.get("stride", g.stride), "grid.stride")
    theta = _number(sec.get("theta", g.theta), "grid.theta")
    if not 4 <= cells <= 8192:
        raise ConfigError("grid.cells must lie in [4, 8192].")
    if not 1 <= steps <= 1_000_000:
        raise ConfigError("grid.steps must lie in [1, 1e6].")
    if not 1 <= stride <= steps:
        raise ConfigError("grid.stride must lie in [1, steps].")
    if theta not in THETA_CHOICES:
        raise ConfigError(f"grid.theta must be one of {THETA_CHOICES}.")
    return GridSpec(cells=cells, steps=steps, stride=stride, theta=theta)


def _ensemble(sec: Mapping[str, str]) -> EnsembleSpec:
    e = EnsembleSpec()
    samples = _int(sec.get("samples", e.samples), "ensemble.samples")
    threads = _int(sec.get("threads", e.threads), "ensemble.threads")
    if samples < 1:
        raise ConfigError("ensemble.samples must be >= 1.")
    if threads < 0:
        raise ConfigError("ensemble.threads must be >= 0.")
    return EnsembleSpec(seed=_check_seed(_int(sec.get("seed", e.seed), "ensemble.seed")),
                        samples=samples, threads=threads)


def _output(sec: Mapping[str, str]) -> OutputSpec:
    o = OutputSpec()
    return OutputSpec(out=sec.get("out", o.out).strip(), ledger=sec.get("ledger", o.ledger).strip(),
                      write_paths=_bool(sec.get("write_paths", "false"), "output.write_paths"),
                      gate=_bool(sec.get("gate", "false"), "output.gate"))


def parse_config(parser: configparser.ConfigParser, source: str = "") -> RunConfig:
    for s in parser.sections():
        if s not in SECTIONS:
            raise ConfigError(f"Unknown config section [{s}].")

    def sec(name: str) -> Dict[str, str]:
        return dict(parser.items(name)) if parser.has_section(name) else {}

    return RunConfig(
        domain=_domain(sec("domain")),
        coefficients=_coefficients(sec("coefficients")),
        grid=_grid(sec("grid")),
        ensemble=_ensemble(sec("ensemble")),
        experiment=ExperimentSpec(tuple(sorted(sec("experiment").items()))),
        output=_output(sec("output")),
        source=source,
    )


def load_config(path: str, env: Optional[Mapping[str, str]] = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"Cannot read config {path!r}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"Malformed config {path!r}: {exc}") from exc
    apply_env_overrides(parser, os.environ if env is None else env)
    return parse_config(parser, source=path)


def loads_config(text: str, env: Optional[Mapping[str, str]] = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"Malformed config: {exc}") from exc
    apply_env_overrides(parser, {} if env is None else env)
    return parse_config(parser)
