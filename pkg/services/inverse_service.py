# services/inverse_service.py
#!/usr/bin/env python3
# -*- coding: utf-8 -*-

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.functionals import ObservationWindow, observation_gap, validate_window
from core.inverse import (
    BoundaryParametrization,
    ExcludedRecord,
    ForwardModel,
    common_interior_ball,
    domain_difference_energy,
    fit_difference_decay,
    fit_stability,
    plot_pairs,
    q_ordering,
    reconstruct_boundary,
    stability_sweep,
    uniqueness_probe,
)
from core.motion import MovingDomain
from domain.config import RunConfig
from domain.errors import AcceptanceError, ConfigError, InsufficientDataError, InvalidInputError
from domain.models import ReconstructionResult, StabilityFit, StabilityRecord
from services.simulation_service import build_ensemble, coefficient_forms, snapshot_spacing
from storage.exports import OutputWriter

logger = logging.getLogger(__name__)


@dataclass
class SweepOutcome:
    records: List[StabilityRecord]
    excluded: List[ExcludedRecord]
    fit: Optional[StabilityFit]
    fit_error: str = ""
    paired: Dict[str, object] = field(default_factory=dict)
    uniqueness: List[Dict[str, float]] = field(default_factory=list)
    difference: Dict[str, object] = field(default_factory=dict)
    q_order: Dict[str, object] = field(default_factory=dict)


class InverseService:
    """reconstruct and stability-sweep over a parametrized moving boundary."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.progress_hook = None

    def _progress(self, msg: str) -> None:
        if callable(self.progress_hook):
            try:
                self.progress_hook(msg)
            except Exception:
                pass

    # ---- configuration ----
    def parametrization(self) -> BoundaryParametrization:
        ex = self.cfg.experiment
        spec = self.cfg.domain
        kind = ex.text("boundary_kind", "endpoint" if spec.dim == 1 else "radial")
        basis = ex.words("boundary_basis", ("linear",) if kind == "endpoint" else ("cos2",))
        n = len(basis)
        lower = ex.numbers("boundary_lower", (-0.2,) * n)
        upper = ex.numbers("boundary_upper", (0.2,) * n)
        coeffs = ex.numbers("boundary_coeffs", (0.0,) * n)
        center = tuple(spec.center[:2]) if len(spec.center) >= 2 else (0.0, 0.0)
        try:
            return BoundaryParametrization(kind=kind, basis=tuple(basis), coeffs=tuple(coeffs),
                                           lower=tuple(lower), upper=tuple(upper), horizon=spec.horizon,
                                           length=spec.length, center=center)
        except InvalidInputError as exc:
            raise ConfigError(f"boundary parametrization: {exc}") from exc

    def window(self) -> ObservationWindow:
        ex = self.cfg.experiment
        dim = self.cfg.domain.dim
        lo = ex.numbers("window_lo", (0.1,) * dim)
        hi = ex.numbers("window_hi", (0.3,) * dim)
        if len(lo) != dim or len(hi) != dim:
            raise ConfigError(f"experiment.window_lo/window_hi need {dim} coordinate(s).")
        try:
            return ObservationWindow(lo=lo, hi=hi, t_start=ex.number("window_t_start", 0.0),
                                     resolution=ex.integer("window_resolution", 32))
        except InvalidInputError as exc:
            raise ConfigError(f"observation window: {exc}") from exc

    def model(self) -> ForwardModel:
        cfg = self.cfg
        return ForwardModel(forms=coefficient_forms(cfg.coefficients), ensemble=build_ensemble(cfg),
                            cells=cfg.grid.cells, F=cfg.coefficients.F, kappa0=cfg.coefficients.kappa0,
                            theta=cfg.grid.theta, stride=cfg.grid.stride, workers=cfg.ensemble.workers)

    def _spacing(self, domain: MovingDomain) -> float:
        return self.cfg.experiment.number("geometry_spacing", snapshot_spacing(domain, self.cfg.grid.cells))

    def _check_window(self, w: ObservationWindow, param: BoundaryParametrization, coeff_sets) -> None:
        times = np.linspace(0.0, self.cfg.domain.horizon, 9)
        validate_window(w, [param.build_domain(c) for c in coeff_sets], times)

    # ---- reconstruct ----
    def reconstruct(self) -> Tuple[BoundaryParametrization, ReconstructionResult, Dict[str, object]]:
        ex = self.cfg.experiment
        param = self.parametrization()
        truth = ex.numbers("boundary_truth", param.coeffs)
        if len(truth) != param.size or not param.in_box(truth):
            raise ConfigError("experiment.boundary_truth must have one value per term and lie in the box.")
        w = self.window()
        self._check_window(w, param, [truth] + param.corners())
        model = self.model()
        self._progress("observe")
        observed = model.simulate(param.build_domain(truth))
        search = ex.text("search", "grid")
        self._progress(f"search ({search})")
        fitted, result = reconstruct_boundary(
            observed, param, model, w, search=search, grid_points=ex.integer("grid_points", 9),
            workers=ex.integer("search_workers", self.cfg.ensemble.workers),
            progress=lambda n, best: self._progress(f"{n} evaluations, best misfit {best:.3e}"),
        )
        extra = {"truth": list(truth), "error": [abs(a - b) for a, b in zip(result.coeffs, truth)]}
        return fitted, result, extra

    def write_reconstruction(self, fitted: BoundaryParametrization, result: ReconstructionResult,
                             extra: Dict[str, object], writer: OutputWriter) -> List[str]:
        report = {
            "kind": fitted.kind,
            "basis": list(fitted.basis),
            "coeffs": list(result.coeffs),
            "misfit": result.misfit,
            "evaluations": result.evaluations,
            "at_box_boundary": result.at_box_boundary,
            "flagged": result.flagged,
            "box": {"lower": list(fitted.lower), "upper": list(fitted.upper)},
        }
        report.update(extra)
        paths = [writer.json("reconstruct.json", report)]
        if result.flagged and self.cfg.output.gate:
            raise AcceptanceError("best fit sits on the admissible box with nonzero misfit", ["box_boundary"])
        return paths

    # ---- stability ----
    def stability(self) -> SweepOutcome:
        ex = self.cfg.experiment
        param = self.parametrization()
        direction = ex.numbers("stability_direction", (1.0,) + (0.0,) * (param.size - 1))
        amplitudes = ex.numbers("stability_amplitudes", (0.005, 0.01, 0.02, 0.04, 0.08, 0.16))
        T = self.cfg.domain.horizon
        t0s = ex.numbers("stability_t0s", (T / 4, T / 2, T))
        if len(amplitudes) < 1 or len(t0s) < 1:
            raise ConfigError("stability sweep needs amplitudes and t0 values.")
        w = self.window()
        coeff_sets = [tuple(c + a * d for c, d in zip(param.coeffs, direction)) for a in amplitudes]
        self._check_window(w, param, [param.coeffs] + coeff_sets)
        model = self.model()
        spacing = self._spacing(param.build_domain())
        nsigma = ex.number("nsigma", 3.0)
        records, excluded = stability_sweep(
            param, direction, amplitudes, model, w, t0s, kappa0=self.cfg.coefficients.kappa0,
            spacing=spacing, nsigma=nsigma,
            progress=lambda k, n: self._progress(f"amplitude {k}/{n}"),
        )
        fit, err = None, ""
        try:
            fit = fit_stability(records)
        except InsufficientDataError as exc:
            err = str(exc)
            logger.warning("stability fit skipped: %s", exc)
        paired: Dict[str, object] = {}
        fitted_q: Dict[float, Optional[float]] = {}
        for t0 in t0s:
            sub = [r for r in records if abs(r.t0 - t0) <= 1e-12 * max(1.0, t0)]
            try:
                f = fit_stability(sub)
                paired[f"{t0:g}"] = {"q": f.q, "q_stderr": f.q_stderr, "q_lower95": f.q_lower95,
                                     "n_records": f.n_records, "gamma": sub[0].gamma}
                fitted_q[float(t0)] = f.q
            except InsufficientDataError as exc:
                paired[f"{t0:g}"] = {"error": str(exc)}
        order = q_ordering(fitted_q)
        if order["ordered"] is False:
            logger.warning("stability rate is not smaller at earlier t0: %s", order)
        outcome = SweepOutcome(records=records, excluded=excluded, fit=fit, fit_error=err, paired=paired,
                               q_order=order)
        cells = ex.numbers("uniqueness_cells", ())
        if cells:
            outcome.uniqueness = self.uniqueness(param, direction, cells, model, w, spacing, nsigma)
        diff_amps = ex.numbers("difference_amplitudes", ())
        if diff_amps:
            outcome.difference = self.domain_difference(param, direction, diff_amps, model, w)
        return outcome

    def uniqueness(self, param: BoundaryParametrization, direction, cells, model: ForwardModel,
                   w: ObservationWindow, spacing: float, nsigma: float) -> List[Dict[str, float]]:
        """Perturbations of h grid cells; the gap should clear the noise floor and grow with h."""
        base = param.build_domain()
        h_unit = self.cfg.domain.length / self.cfg.grid.cells
        rows = []
        for h in sorted(cells):
            coeffs = [c + h * h_unit * d for c, d in zip(param.coeffs, direction)]
            if not param.in_box(coeffs, tol=1e-12):
                raise ConfigError(f"uniqueness perturbation of {h:g} cells leaves the admissible box.")
            self._progress(f"uniqueness h={h:g}")
            res = uniqueness_probe(base, param.build_domain(coeffs), model, w, spacing=spacing, nsigma=nsigma)
            rows.append({"cells": float(h), "gap": res.gap, "gap_stderr": res.gap_stderr, "d": res.d,
                         "noise_floor": res.noise_floor, "above_floor": res.above_floor})
        return rows

    def domain_difference(self, param: BoundaryParametrization, direction, amplitudes, model: ForwardModel,
                          w: ObservationWindow) -> Dict[str, object]:
        """Outside energies per amplitude, with the interior floor on a ball common to both domains at T."""
        base = param.build_domain()
        u_ref = model.simulate(base)
        T = self.cfg.domain.horizon
        spacing = self._spacing(base)
        eps, e1, reports = [], [], []
        for a in amplitudes:
            coeffs = [c + a * d for c, d in zip(param.coeffs, direction)]
            dom = param.build_domain(coeffs)
            u = model.simulate(dom)
            gap = observation_gap(u, u_ref, w).value
            if not 0 < gap < 1:
                continue
            z, rho_bar = common_interior_ball(dom, base, T, spacing)
            rep = domain_difference_energy(u, u_ref, gap, self.cfg.coefficients.kappa0, z=z, rho_bar=rho_bar)
            eps.append(gap)
            e1.append(max(rep.energy_1, rep.energy_2))
            reports.append({"amplitude": float(a), "eps_tilde": gap, "energy_1": rep.energy_1,
                            "energy_2": rep.energy_2, "empty_difference": rep.empty_difference,
                            "z": z.tolist(), "rho_bar": rho_bar, "lower": rep.lower})
        out: Dict[str, object] = {"records": reports,
                                  "lower_positive": bool(reports) and all(r["lower"] > 0 for r in reports)}
        if len(eps) >= 2:
            n = self.cfg.domain.dim
            out["C_loglog"] = fit_difference_decay(eps, e1, n, "loglog", self.cfg.coefficients.kappa0)
            out["C_log"] = fit_difference_decay(eps, e1, n, "log", self.cfg.coefficients.kappa0)
        return out

    def write_stability(self, outcome: SweepOutcome, writer: OutputWriter) -> List[str]:
        rows = [(r.amplitude, r.t0, r.eps_tilde, r.eps_stderr, r.d, r.d_m, r.gamma) for r in outcome.records]
        paths = [writer.csv("stability.csv", ["amplitude", "t0", "eps_tilde", "eps_stderr", "d", "d_m", "gamma"],
                            rows)]
        paths.append(writer.csv("stability_plot.csv", ["abs_ln_eps", "d"], plot_pairs(outcome.records)))
        fit = outcome.fit
        summary: Dict[str, object] = {
            "n_records": len(outcome.records),
            "excluded": [{"amplitude": e.amplitude, "t0": e.t0, "eps_tilde": e.eps_tilde, "reason": e.reason}
                         for e in outcome.excluded],
            "fit": None if fit is None else {"A": fit.A, "q": fit.q, "q_stderr": fit.q_stderr,
                                             "q_lower95": fit.q_lower95, "n_records": fit.n_records,
                                             "significant": fit.significant},
            "fit_error": outcome.fit_error,
            "per_t0": outcome.paired,
            "q_ordering": outcome.q_order,
        }
        if outcome.uniqueness:
            gaps = [r["gap"] for r in outcome.uniqueness]
            summary["uniqueness"] = {"rows": outcome.uniqueness,
                                     "monotone": all(b >= a for a, b in zip(gaps, gaps[1:])),
                                     "all_above_floor": all(r["above_floor"] for r in outcome.uniqueness)}
        if outcome.difference:
            summary["domain_difference"] = outcome.difference
        paths.append(writer.json("stability_fit.json", summary))
        if self.cfg.output.gate and (fit is None or not fit.significant):
            raise AcceptanceError("stability fit is not significant at 95%", ["stability_q"])
        return paths
