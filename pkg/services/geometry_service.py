# services/geometry_service.py
#!/usr/bin/env python3
# -*- coding: utf-8 -*-

from __future__ import annotations

import logging
from typing import Dict, List

import numpy as np

from core.geometry import (
    certify_lipschitz,
    check_interior_ball,
    distance_ratio_sweep,
    interior_ball_excess,
    interior_ball_failures,
    minimal_speed_constant,
    speed_bound_report,
)
from core.motion import MovingDomain
from core.solver import DET_TOL
from domain.config import RunConfig
from domain.errors import InvalidInputError
from domain.models import GeometryCheck
from services.simulation_service import build_domain, snapshot_spacing
from storage.exports import OutputWriter

logger = logging.getLogger(__name__)


class GeometryService:
    """check-geometry: the standing assumptions on the domain family, sampled."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.progress_hook = None

    def _progress(self, msg: str) -> None:
        if callable(self.progress_hook):
            try:
                self.progress_hook(msg)
            except Exception:
                pass

    def _times(self) -> np.ndarray:
        n = self.cfg.experiment.integer("geometry_times", 9)
        if n < 2:
            raise InvalidInputError("experiment.geometry_times must be >= 2.")
        return np.linspace(0.0, self.cfg.domain.horizon, n)

    def _spacing(self, domain: MovingDomain) -> float:
        default = snapshot_spacing(domain, min(self.cfg.grid.cells, 64))
        return self.cfg.experiment.number("geometry_spacing", default)

    def checks(self) -> List[GeometryCheck]:
        spec = self.cfg.domain
        domain = build_domain(spec)
        times = self._times()
        spacing = self._spacing(domain)
        out: List[GeometryCheck] = []

        self._progress("motion law")
        try:
            info = domain.validate(times, spacing)
            out.append(GeometryCheck("motion_law", bool(info["speed_bounded"]), info))
        except InvalidInputError as exc:
            out.append(GeometryCheck("motion_law", False, {"error": str(exc)}))

        Y = np.vstack([domain.reference.interior_sample(spacing),
                       domain.reference.boundary_sample(spacing)[0]])
        dets = [float(np.min(domain.det_dtau(float(t), Y))) for t in times]
        out.append(GeometryCheck("jacobian_determinant", min(dets) > DET_TOL,
                                 {"min_det": min(dets), "tol": DET_TOL}))

        self._progress("interior ball")
        excess = []
        worst = None
        for t in times:
            snap = domain.snapshot(float(t), spacing)
            ok = bool(check_interior_ball(snap, spec.R0))
            excess.append((float(t), interior_ball_excess(snap, spec.R0), ok))
            if not ok and worst is None:
                bad = interior_ball_failures(snap, spec.R0)
                worst = {"t": float(t), "count": int(bad.shape[0]), "first": bad[0].tolist()}
        out.append(GeometryCheck("interior_ball", all(ok for _, _, ok in excess),
                                 {"R0": spec.R0, "per_time": [[t, e, ok] for t, e, ok in excess],
                                  "first_failure": worst}))

        self._progress("speed bound")
        stride = self.cfg.experiment.integer("geometry_stride", 1)
        detail: Dict[str, object] = speed_bound_report(domain, spec.E, times, spacing, stride=stride)
        speed_ok = bool(detail["passed"])
        if not speed_ok:
            detail["smallest_passing_E"] = minimal_speed_constant(
                domain, [spec.E * f for f in (2, 4, 8, 16)], times, spacing, stride=stride)
        out.append(GeometryCheck("speed_bound", speed_ok, detail))

        self._progress("lipschitz cones")
        lip = [bool(certify_lipschitz(domain.snapshot(float(t), spacing), spec.rho0, spec.alpha)) for t in times]
        out.append(GeometryCheck("lipschitz", all(lip),
                                 {"rho0": spec.rho0, "alpha": spec.alpha,
                                  "failed_times": [float(t) for t, ok in zip(times, lip) if not ok]}))

        amps = self.cfg.experiment.numbers("distance_amplitudes", ())
        if amps:
            out.append(self.distance_ratios(domain, amps, spacing))
        for c in out:
            logger.info("check-geometry: %s %s", c.name, "pass" if c.passed else "FAIL")
        return out

    def distance_ratios(self, domain: MovingDomain, amplitudes, spacing: float) -> GeometryCheck:
        """d / d_m between G(T) and dilated copies; measured only, always reported."""
        T = domain.horizon
        base = domain.snapshot(T, spacing)
        center = np.mean(base.all_points(), axis=0)
        perturbed = []
        for a in amplitudes:
            snap = domain.snapshot(T, spacing)
            scale = 1.0 + float(a)
            perturbed.append(type(snap)(
                time=snap.time,
                interior_points=center + scale * (snap.interior_points - center),
                boundary_points=center + scale * (snap.boundary_points - center),
                normals=snap.normals,
                spacing=snap.spacing * scale,
            ))
        rows = distance_ratio_sweep(base, perturbed)
        return GeometryCheck("distance_ratio", True,
                             {"amplitudes": [float(a) for a in amplitudes],
                              "d_dm_ratio": [[d, dm, r] for d, dm, r in rows]})

    def write(self, checks: List[GeometryCheck], writer: OutputWriter) -> List[str]:
        report = {
            "passed": all(c.passed for c in checks),
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks],
            "domain": build_domain(self.cfg.domain).describe(),
        }
        return [writer.json("geometry.json", report)]
