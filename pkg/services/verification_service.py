# services/verification_service.py
#!/usr/bin/env python3
# -*- coding: utf-8 -*-

from __future__ import annotations

import itertools
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.manufactured import CORPUS, ManufacturedSolution, corpus
from core.solver import EnsembleField
from core.verify import (
    carleman_residual,
    chain_nesting_holds,
    cone_chain_build,
    fit_log_law,
    iteration_bound_dominates,
    k_bar_in_bracket,
    log_law_bound,
    margin_ok,
    small_propagation_check,
    sucp_probe,
    two_sphere_fit,
    two_sphere_report,
    two_sphere_validate,
)
from core.weights import CarlemanWeights, default_sigma_table, lambda_threshold
from domain.config import RunConfig
from domain.errors import AcceptanceError, ConfigError, InvalidInputError, PreconditionError
from domain.models import ETA1_MAX, CarlemanResidualReport, GeometryParams, IterationState, TwoSphereParams
from services.simulation_service import SimulationService, geometry_params
from storage.exports import OutputWriter

logger = logging.getLogger(__name__)

DEFAULT_LAMBDAS = (1.0, 2.0, 4.0, 8.0, 16.0)
DEFAULT_SCALES = (1.0, 0.3, 0.1, 0.03, 0.01, 0.003)


class VerificationService:
    """verify-carleman and verify-ucp."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.progress_hook = None

    def _progress(self, msg: str) -> None:
        if callable(self.progress_hook):
            try:
                self.progress_hook(msg)
            except Exception:
                pass

    # ---- weighted estimate ----
    def corpus_members(self) -> List[ManufacturedSolution]:
        horizon = self.cfg.domain.horizon
        names = self.cfg.experiment.words("corpus", ())
        if not names:
            return corpus(horizon)
        unknown = [n for n in names if n not in CORPUS]
        if unknown:
            raise ConfigError(f"experiment.corpus: unknown member(s) {unknown}; known {sorted(CORPUS)}.")
        return [CORPUS[n](horizon=horizon) for n in names]

    def carleman_sweep(self) -> List[CarlemanResidualReport]:
        ex = self.cfg.experiment
        lambdas = ex.numbers("lambdas", DEFAULT_LAMBDAS)
        a = ex.number("carleman_a", 0.05)
        b = ex.number("carleman_b", 0.25)
        t0 = ex.number("carleman_t0", self.cfg.domain.horizon)
        cells = ex.integer("carleman_cells", 256)
        nt = ex.integer("carleman_nt", 129)
        table = default_sigma_table()
        out = []
        for m in self.corpus_members():
            x0 = ex.numbers("carleman_x0", (0.5,))
            for lam in lambdas:
                self._progress(f"{m.name} lambda={lam:g}")
                w = CarlemanWeights(t0=t0, x0=np.asarray(x0), a=a, b=b, lam=float(lam), sigma=table)
                rep = carleman_residual(m, w, cells=cells, nt=nt,
                                        n_paths=min(self.cfg.ensemble.samples, ex.integer("carleman_paths", 200)),
                                        seed=self.cfg.ensemble.seed)
                logger.info("carleman %s lambda=%g margin=%.3e (+/- %.1e)", m.name, lam, rep.margin,
                            rep.margin_stderr)
                out.append(rep)
        return out

    def sigma_summary(self) -> Dict[str, object]:
        table = default_sigma_table()
        return {"C0": table.c0, "bounds_hold": bool(table.bounds_hold()),
                "ode_residual": float(np.max(np.abs(table.ode_residual()))),
                "derivative_floor": table.derivative_floor,
                "lambda_threshold": lambda_threshold(self.cfg.experiment.number("carleman_inner", 0.25),
                                                     self.cfg.experiment.number("carleman_outer", 0.5))}

    def write_carleman(self, reports: Sequence[CarlemanResidualReport], writer: OutputWriter) -> List[str]:
        nsigma = self.cfg.experiment.number("nsigma", 3.0)
        failures = [f"{r.name}@lambda={r.lam:g}" for r in reports if not margin_ok(r, nsigma)]
        report = {
            "passed": not failures,
            "failures": failures,
            "sigma": self.sigma_summary(),
            "terms": [r.to_record() for r in reports],
        }
        paths = [writer.json("carleman.json", report)]
        rows = [(r.name, r.lam, r.lhs, r.rhs, r.margin, r.margin_stderr, r.log_scale, margin_ok(r, nsigma))
                for r in reports]
        paths.append(writer.csv("carleman.csv",
                                ["solution", "lambda", "lhs", "rhs", "margin", "margin_stderr", "log_scale", "ok"],
                                rows))
        if failures and self.cfg.output.gate:
            raise AcceptanceError(f"{len(failures)} weighted-estimate configuration(s) failed.", failures)
        return paths

    # ---- unique continuation ----
    def _center(self, field: EnsembleField) -> Tuple[float, ...]:
        default = tuple(float(v) for v in np.mean(field.physical_points(field.n_slices - 1)[field.grid.interior],
                                                   axis=0))
        x0 = self.cfg.experiment.numbers("ucp_x0", default)
        if len(x0) != field.dim:
            raise ConfigError(f"experiment.ucp_x0 needs {field.dim} coordinate(s).")
        return x0

    def two_sphere(self, field: EnsembleField) -> Dict[str, object]:
        ex = self.cfg.experiment
        g = geometry_params(self.cfg.domain)
        t0 = ex.number("ucp_t0", float(field.times[-1]))
        x0 = self._center(field)
        regime = ex.text("two_sphere_regime", "interior")
        triples = [(r, rho, R) for r, rho, R in itertools.product(
            ex.numbers("two_sphere_r", (0.02, 0.03, 0.04)),
            ex.numbers("two_sphere_rho", (0.05, 0.06, 0.08, 0.1)),
            ex.numbers("two_sphere_outer", (0.35, 0.4, 0.45)))
            if r <= rho <= g.eta1 * R]
        reports, skipped = [], []
        for r, rho, R in triples:
            p = TwoSphereParams(r=r, rho=rho, R=R, x0=x0, t0=t0, eta1=g.eta1, regime=regime)
            try:
                reports.append(two_sphere_report(field, p, g.R0))
            except (PreconditionError, InvalidInputError) as exc:
                skipped.append({"r": r, "rho": rho, "R": R, "reason": str(exc)})
        train, holdout = reports[0::2], reports[1::2]
        fit = two_sphere_fit(train)
        val = two_sphere_validate(fit, holdout, ex.number("nsigma", 3.0))
        return {
            "fit": {"C_mult": fit.C_mult, "C_exp": fit.C_exp, "n_used": fit.n_used, "n_excluded": fit.n_excluded,
                    "min_slack": min(fit.slacks) if fit.slacks else None},
            "validation": {"n_checked": val.n_checked, "violations": list(val.violations), "passed": val.passed},
            "reports": [{"r": rep.params.r, "rho": rep.params.rho, "R": rep.params.R, "variant": rep.variant,
                         "train": i % 2 == 0, "eps1": rep.eps1.to_record(), "energy": rep.energy.to_record(),
                         "lhs": rep.lhs.to_record()} for i, rep in enumerate(reports)],
            "skipped": skipped,
        }

    def sucp(self, field: EnsembleField) -> Dict[str, object]:
        ex = self.cfg.experiment
        rep = sucp_probe(field, ex.number("ucp_t0", float(field.times[-1])), self._center(field),
                         ex.numbers("sucp_radii", (0.16, 0.08, 0.04, 0.02)), ex.number("nsigma", 3.0))
        return {"radii": list(rep.radii), "masses": list(rep.masses), "stderrs": list(rep.stderrs),
                "slope": rep.slope, "slope_stderr": rep.slope_stderr, "vanishing_order": rep.vanishing_order,
                "local_slopes": list(rep.local_slopes), "inconclusive": rep.inconclusive,
                "finite_order": rep.finite_order}

    def _cone_apex(self, field: EnsembleField) -> Tuple[np.ndarray, np.ndarray]:
        ex = self.cfg.experiment
        spec = self.cfg.domain
        if field.dim == 1:
            apex, axis = (0.0,), (1.0,)
        else:
            c = tuple(spec.center[:2]) if len(spec.center) >= 2 else (0.0, 0.0)
            apex, axis = (c[0] + spec.length, c[1]), (-1.0, 0.0)
        return np.asarray(ex.numbers("cone_x0", apex)), np.asarray(ex.numbers("cone_zeta", axis))

    def cone_chain(self, field: EnsembleField) -> Dict[str, object]:
        ex = self.cfg.experiment
        g = geometry_params(self.cfg.domain)
        x0, zeta = self._cone_apex(field)
        chain = cone_chain_build(x0, zeta, g, ex.number("cone_sigma", 0.01))
        prop = small_propagation_check(field, chain, self.cfg.coefficients.kappa0,
                                       ex.number("ucp_t0", float(field.times[-1])), ex.number("nsigma", 3.0))
        return {"k_bar": chain.k_bar, "bracket": list(chain.bracket), "cone_ratio": chain.cone_ratio,
                "nesting": chain_nesting_holds(chain, g), "k_bar_in_bracket": k_bar_in_bracket(chain),
                "propagation": {"sigma_local": prop.sigma_local, "C1": prop.C1, "s": prop.s,
                                "iterated_bound": prop.iterated_bound, "pointwise_bound": prop.pointwise_bound,
                                "measured": prop.measured, "measured_stderr": prop.measured_stderr,
                                "consistent": prop.consistent, "informative": prop.informative},
                "log_law": self.log_law_sweep(prop.sigma_local, prop.measured, g.alpha,
                                              ex.numbers("cone_scales", DEFAULT_SCALES))}

    def log_law_sweep(self, sigma: float, measured: float, alpha: float,
                      scales: Sequence[float]) -> Dict[str, object]:
        """
        Data scaled by c scale the solution by c, so (c^2 sigma, c^2 measured)
        sweeps sigma. C is fitted on every other point, largest sigma first,
        and checked on the rest.
        """
        kappa0 = self.cfg.coefficients.kappa0
        pairs = sorted(((c * c * sigma, c * c * measured) for c in scales if 0 < c * c * sigma < 1),
                       reverse=True)
        if sigma <= 0 or len(pairs) < 2:
            return {"sigmas": [s for s, _ in pairs], "measured": [m for _, m in pairs], "C": None,
                    "holdout_passed": None}
        train, holdout = pairs[0::2], pairs[1::2]
        C = fit_log_law([s for s, _ in train], [m for _, m in train], kappa0, alpha)
        bounds = [log_law_bound(C, kappa0, s, alpha) if math.isfinite(C) else math.inf for s, _ in pairs]
        passed = math.isfinite(C) and all(m <= log_law_bound(C, kappa0, s, alpha) for s, m in holdout)
        logger.info("log law: C=%.4g over %d sigma values, hold-out %s", C, len(pairs),
                    "ok" if passed else "FAIL")
        return {"sigmas": [s for s, _ in pairs], "measured": [m for _, m in pairs], "C": C,
                "bounds": bounds, "holdout_passed": bool(passed)}

    def random_draws(self) -> Dict[str, object]:
        """Iteration lemma and cone-chain nesting on seeded random parameter draws."""
        ex = self.cfg.experiment
        rng = np.random.default_rng(self.cfg.ensemble.seed)
        n_iter = ex.integer("iteration_draws", 10000)
        iter_fail = 0
        for _ in range(n_iter):
            st = IterationState(x1=float(10 ** rng.uniform(-8, 2)), C1=float(1 + 10 ** rng.uniform(-3, 2)),
                                s=float(rng.uniform(0.01, 0.99)), n=int(rng.integers(1, 60)))
            iter_fail += not iteration_bound_dominates(st)
        n_cone = ex.integer("cone_draws", 1000)
        cone_fail = 0
        for _ in range(n_cone):
            g = GeometryParams(R0=1.0, E=float(rng.uniform(1, 5)), rho0=float(rng.uniform(0.05, 1)),
                               alpha=float(rng.uniform(0.05, math.pi / 4)),
                               eta1=float(rng.uniform(0.05, ETA1_MAX)))
            sa = math.sin(g.alpha)
            mu1 = g.rho0 / (1 + sa)
            gap = mu1 * (1 - g.eta1 * sa / (4 * g.E))
            chain = cone_chain_build(np.zeros(2), (1.0, 0.0), g, float(rng.uniform(0.01, 0.99)) * gap)
            cone_fail += not (chain_nesting_holds(chain, g) and k_bar_in_bracket(chain))
        return {"iteration_draws": n_iter, "iteration_failures": iter_fail,
                "cone_draws": n_cone, "cone_failures": cone_fail}

    def ucp(self, sim: Optional[SimulationService] = None) -> Dict[str, object]:
        sim = sim or SimulationService(self.cfg)
        self._progress("simulate")
        field = sim.run().field
        self._progress("two-sphere sweep")
        out: Dict[str, object] = {"two_sphere": self.two_sphere(field)}
        self._progress("sucp probe")
        out["sucp"] = self.sucp(field)
        self._progress("cone chain")
        out["cone_chain"] = self.cone_chain(field)
        out["draws"] = self.random_draws()
        return out

    def write_ucp(self, report: Dict[str, object], writer: OutputWriter) -> List[str]:
        failures = []
        if not report["two_sphere"]["validation"]["passed"]:
            failures.append("two_sphere_holdout")
        if report["sucp"]["inconclusive"] is False and not report["sucp"]["finite_order"]:
            failures.append("sucp_finite_order")
        cone = report["cone_chain"]
        if not (cone["nesting"] and cone["k_bar_in_bracket"] and cone["propagation"]["consistent"]):
            failures.append("cone_chain")
        if cone["log_law"]["holdout_passed"] is False:
            failures.append("log_law")
        if report["draws"]["iteration_failures"] or report["draws"]["cone_failures"]:
            failures.append("random_draws")
        body = dict(report)
        body["passed"] = not failures
        body["failures"] = failures
        paths = [writer.json("ucp.json", body)]
        rows = [(r["r"], r["rho"], r["R"], r["train"], r["eps1"]["value"], r["energy"]["value"], r["lhs"]["value"])
                for r in report["two_sphere"]["reports"]]
        paths.append(writer.csv("two_sphere.csv", ["r", "rho", "R", "train", "eps1", "energy", "lhs"], rows))
        s = report["sucp"]
        paths.append(writer.csv("sucp.csv", ["radius", "mass", "stderr"],
                                list(zip(s["radii"], s["masses"], s["stderrs"]))))
        if failures and self.cfg.output.gate:
            raise AcceptanceError(f"unique continuation checks failed: {', '.join(failures)}", failures)
        return paths
