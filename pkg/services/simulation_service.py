# services/simulation_service.py
#!/usr/bin/env python3
# -*- coding: utf-8 -*-

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.forms import parse_form
from core.motion import (
    ENDPOINT_BASES,
    DilationLaw,
    EndpointLaw,
    IdentityLaw,
    IntervalDomain,
    LShapeDomain,
    MotionLaw,
    MovingDomain,
    RadialFourierLaw,
    ReferenceDomain,
    StarDomain,
    TranslationLaw,
    WaveLaw,
    disk,
)
from core.solver import EnsembleField, ReferenceGrid, SPDECoefficients, build_reference_grid, solve
from core.solver import energy_decay_profile, mean_square_increments
from core.stochastic import Ensemble, generate_paths, increment_ks_test, ito_isometry_check
from domain.config import CoefficientSpec, DomainSpec, RunConfig
from domain.errors import ConfigError, InvalidInputError
from domain.models import GeometryParams
from storage.exports import OutputWriter

logger = logging.getLogger(__name__)

COEFFICIENT_KEYS = ("a1", "b1", "c1", "f", "u0")


# ---- builders shared by every service ----
def parse_harmonics(text: str) -> Tuple[Tuple[int, float, float], ...]:
    """'3:0.1:0, 5:0:0.05' -> ((3, 0.1, 0.0), (5, 0.0, 0.05))."""
    out = []
    for item in (text or "").replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) not in (2, 3):
            raise ConfigError(f"Harmonic {item!r} must look like k:a or k:a:b.")
        try:
            k = int(parts[0])
            a = float(parts[1])
            b = float(parts[2]) if len(parts) == 3 else 0.0
        except ValueError as exc:
            raise ConfigError(f"Harmonic {item!r} is not numeric.") from exc
        if k < 1:
            raise ConfigError("Harmonic index must be >= 1.")
        out.append((k, a, b))
    return tuple(out)


def build_reference(spec: DomainSpec) -> ReferenceDomain:
    try:
        if spec.reference == "interval":
            return IntervalDomain(spec.length)
        center = tuple(float(c) for c in spec.center[:2]) if len(spec.center) >= 2 else (0.0, 0.0)
        if spec.reference == "disk":
            return disk(spec.length, center, spec.gamma_arc)
        if spec.reference == "star":
            return StarDomain(r0=spec.length, center=center, harmonics=parse_harmonics(spec.harmonics),
                              gamma_arc=spec.gamma_arc)
        return LShapeDomain(size=spec.length)
    except InvalidInputError as exc:
        raise ConfigError(f"domain: {exc}") from exc


def _center(spec: DomainSpec, params: Dict[str, object], dim: int) -> List[float]:
    raw = params.get("center", list(spec.center))
    vals = [float(v) for v in np.atleast_1d(raw)]
    if len(vals) < dim:
        vals = vals + [0.0] * (dim - len(vals))
    return vals[:dim]


def build_motion(spec: DomainSpec) -> MotionLaw:
    form = parse_form(spec.motion)
    name = str(form["name"])
    params: Dict[str, object] = dict(form["params"])
    dim = spec.dim
    try:
        if name == "identity":
            return IdentityLaw(dim)
        if name == "dilation":
            return DilationLaw(float(params.get("rate", 0.0)), _center(spec, params, dim))
        if name == "translation":
            v = [float(x) for x in np.atleast_1d(params.get("velocity", [0.0] * dim))]
            if len(v) != dim:
                raise ConfigError(f"translation velocity needs {dim} components.")
            return TranslationLaw(v)
        if name == "endpoint":
            unknown = [k for k in params if k not in ENDPOINT_BASES]
            if unknown:
                raise ConfigError(f"endpoint motion: unknown profile(s) {unknown}; known {ENDPOINT_BASES}.")
            terms = [(k, float(params[k])) for k in ENDPOINT_BASES if k in params]
            return EndpointLaw(spec.length, terms, spec.horizon)
        if name == "radial":
            modes: Dict[int, List[float]] = {}
            for key, val in params.items():
                kind, idx = key[:3], key[3:]
                if kind not in ("cos", "sin") or not idx.isdigit():
                    raise ConfigError(f"radial motion term {key!r} must look like cos<k> or sin<k>.")
                slot = modes.setdefault(int(idx), [0.0, 0.0])
                slot[0 if kind == "cos" else 1] = float(val)
            center = _center(spec, {}, 2)
            return RadialFourierLaw(spec.length, center, [(k, a, b) for k, (a, b) in sorted(modes.items())],
                                    spec.horizon)
        if name == "wave":
            return WaveLaw(float(params.get("amplitude", 0.0)), float(params.get("wavenumber", 1.0)),
                           spec.horizon)
    except InvalidInputError as exc:
        raise ConfigError(f"domain.motion: {exc}") from exc
    raise ConfigError(f"Unknown motion law {name!r}.")


def build_domain(spec: DomainSpec) -> MovingDomain:
    return MovingDomain(build_reference(spec), build_motion(spec), spec.horizon)


def geometry_params(spec: DomainSpec) -> GeometryParams:
    return GeometryParams(R0=spec.R0, E=spec.E, rho0=spec.rho0, alpha=spec.alpha, eta1=spec.eta1)


def coefficient_forms(spec: CoefficientSpec) -> Dict[str, Dict[str, object]]:
    return {key: parse_form(getattr(spec, key)) for key in COEFFICIENT_KEYS}


def time_grid(cfg: RunConfig) -> np.ndarray:
    return np.linspace(0.0, cfg.domain.horizon, cfg.grid.steps + 1)


def snapshot_spacing(domain: MovingDomain, cells: int) -> float:
    """Sampling spacing for geometry checks tied to the solver grid."""
    lo, hi = domain.reference.bbox()
    return float(np.max(np.asarray(hi) - np.asarray(lo))) / max(4, cells)


def build_ensemble(cfg: RunConfig, samples: Optional[int] = None) -> Ensemble:
    return generate_paths(cfg.ensemble.seed, samples or cfg.ensemble.samples, time_grid(cfg),
                          workers=cfg.ensemble.workers)


@dataclass
class SimulationResult:
    field: EnsembleField
    ensemble: Ensemble
    grid: ReferenceGrid
    report: Dict[str, object]


class SimulationService:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        # optional hook (done_paths, total_paths)
        self.progress_hook = None

    def _progress(self, done: int, total: int) -> None:
        if callable(self.progress_hook):
            try:
                self.progress_hook(done, total)
            except Exception:
                pass

    def domain(self) -> MovingDomain:
        return build_domain(self.cfg.domain)

    def coefficients(self, domain: MovingDomain) -> SPDECoefficients:
        c = self.cfg.coefficients
        try:
            return SPDECoefficients.from_forms(coefficient_forms(c), domain, F=c.F, kappa0=c.kappa0,
                                              spacing=snapshot_spacing(domain, self.cfg.grid.cells))
        except InvalidInputError as exc:
            raise ConfigError(f"coefficients: {exc}") from exc

    def run(self, check_condition: bool = True) -> SimulationResult:
        cfg = self.cfg
        domain = self.domain()
        coeffs = self.coefficients(domain)
        grid = build_reference_grid(domain.reference, cfg.grid.cells)
        ens = build_ensemble(cfg)
        field = solve(domain, coeffs, ens, grid, theta=cfg.grid.theta, stride=cfg.grid.stride,
                      workers=cfg.ensemble.workers, check_condition=check_condition,
                      progress=self._progress)
        report = {
            "domain": domain.describe(),
            "coefficients": {
                "forms": coeffs.description,
                "norm_a1": coeffs.norm_a1,
                "norm_b1": coeffs.norm_b1,
                "norm_c1": coeffs.norm_c1,
                "q1": coeffs.q1,
                "q2": coeffs.q2,
                "F": coeffs.F,
                "kappa0": coeffs.kappa0,
                "autonomous": coeffs.autonomous,
            },
            "grid": {"nodes": grid.describe(), "steps": cfg.grid.steps, "stride": cfg.grid.stride,
                     "theta": cfg.grid.theta, "stored_slices": int(field.n_slices)},
            "ensemble": {"seed": cfg.ensemble.seed, "samples": ens.N},
            "diagnostics": self.diagnostics(field, ens),
        }
        logger.info("simulate: %d paths on %s, %d stored slices", ens.N, grid.describe(), field.n_slices)
        return SimulationResult(field=field, ensemble=ens, grid=grid, report=report)

    @staticmethod
    def diagnostics(field: EnsembleField, ens: Ensemble) -> Dict[str, object]:
        iso = ito_isometry_check(ens, np.ones(ens.steps))
        out: Dict[str, object] = {
            "mean_square_increment": mean_square_increments(field),
            "ito_isometry": {"mc_value": iso.mc_value, "mc_stderr": iso.mc_stderr,
                             "expected": iso.expected, "within_band": iso.within_band},
            "finite": bool(np.all(np.isfinite(field.values))),
        }
        if ens.N * ens.steps >= 8:
            ks = increment_ks_test(ens)
            out["increment_ks"] = {"statistic": ks.statistic, "pvalue": ks.pvalue, "passed": ks.passed}
        return out

    @staticmethod
    def energy_rows(field: EnsembleField) -> List[Tuple[float, float, float, float]]:
        """(t, E int u^2, its stderr, e^{-q2 t} E int u^2) per stored slice."""
        decay = energy_decay_profile(field)
        rows = []
        for i, t in enumerate(field.times):
            per_path = (field.values[:, i, :] ** 2) @ field.quadrature_weights(i)
            se = float(np.std(per_path, ddof=1) / math.sqrt(field.N)) if field.N > 1 else 0.0
            rows.append((float(t), float(np.mean(per_path)), se, float(decay[i])))
        return rows

    @staticmethod
    def mean_field_rows(field: EnsembleField) -> Tuple[List[str], List[List[float]]]:
        header = ["t"] + [f"x{k + 1}" for k in range(field.dim)] + ["mean", "second_moment"]
        mean = field.mean()
        second = field.second_moment()
        rows = []
        for i, t in enumerate(field.times):
            X = field.physical_points(i)
            keep = field.grid.weights > 0
            for p in np.flatnonzero(keep):
                rows.append([float(t)] + [float(v) for v in X[p]] + [float(mean[i, p]), float(second[i, p])])
        return header, rows

    def write(self, result: SimulationResult, writer: OutputWriter) -> List[str]:
        paths = [writer.json("simulate.json", result.report)]
        paths.append(writer.csv("energy.csv", ["t", "mass", "mass_stderr", "decay_profile"],
                                self.energy_rows(result.field)))
        header, rows = self.mean_field_rows(result.field)
        paths.append(writer.csv("mean_field.csv", header, rows))
        if self.cfg.output.write_paths:
            paths.append(writer.paths("paths.bin", result.ensemble.times, result.ensemble.increments))
        return paths
