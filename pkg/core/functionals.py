# core/functionals.py
# -*- coding: utf-8 -*-
"""Monte Carlo estimators of the expectation integrals: observation gaps, sphere masses, cylinder energies."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from core.motion import MovingDomain
from core.solver import EnsembleField
from domain.errors import InvalidInputError
from domain.models import Estimate

logger = logging.getLogger(__name__)


def estimate_from_paths(per_path, name: str, params: Optional[dict] = None) -> Estimate:
    per_path = np.asarray(per_path, dtype=float)
    n = per_path.size
    se = float(np.std(per_path, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(value=float(np.mean(per_path)), stderr=se, name=name, params=dict(params or {}))


def sqrt_estimate(est: Estimate, name: Optional[str] = None) -> Estimate:
    """sqrt of a nonnegative mean with the delta-method standard error."""
    v = max(est.value, 0.0)
    root = math.sqrt(v)
    se = est.stderr / (2.0 * root) if root > 0 else math.sqrt(est.stderr)
    return Estimate(value=root, stderr=se, name=name or est.name, params=dict(est.params))


# ---------- observation window ----------
@dataclass(frozen=True)
class ObservationWindow:
    """Static box O0 = prod [lo_i, hi_i] observed over (t_start, t_end]."""

    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    t_start: float = 0.0
    t_end: Optional[float] = None
    resolution: int = 32

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or any(b <= a for a, b in zip(lo, hi)):
            raise InvalidInputError("Observation window needs lo < hi in every coordinate.")
        if self.resolution < 2:
            raise InvalidInputError("Observation window resolution must be >= 2.")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def cell_volume(self) -> float:
        return float(np.prod([(b - a) / self.resolution for a, b in zip(self.lo, self.hi)]))

    def nodes(self) -> np.ndarray:
        """Cell midpoints of a resolution^n subdivision."""
        axes = [a + (np.arange(self.resolution) + 0.5) * (b - a) / self.resolution
                for a, b in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def enlarged(self, margin: float) -> "ObservationWindow":
        return ObservationWindow(tuple(a - margin for a in self.lo), tuple(b + margin for b in self.hi),
                                 self.t_start, self.t_end, self.resolution)

    def slices(self, u: EnsembleField) -> np.ndarray:
        t_end = u.times[-1] if self.t_end is None else self.t_end
        tol = 1e-12 * max(1.0, abs(t_end))
        sel = np.flatnonzero((u.times > self.t_start + tol) & (u.times <= t_end + tol))
        if sel.size == 0:
            raise InvalidInputError("Observation window contains no stored time slice.")
        return sel


def validate_window(w: ObservationWindow, domains: Iterable[MovingDomain], times: Sequence[float]) -> None:
    """O0 must sit inside every domain at every sampled time."""
    X = w.nodes()
    corners = np.array(np.meshgrid(*zip(w.lo, w.hi), indexing="ij")).reshape(w.dim, -1).T
    pts = np.vstack([X, corners])
    for dom in domains:
        for t in times:
            if np.any(dom.sdf(float(t), pts) >= 0):
                raise InvalidInputError(f"Observation window leaves the domain at t = {t:g}.")


def _require_coupled(u1: EnsembleField, u2: EnsembleField) -> None:
    if u1.N != u2.N or not np.array_equal(u1.times, u2.times):
        raise InvalidInputError("Coupled ensembles need equal path counts and time slices.")
    if u1.base_seed != u2.base_seed:
        raise InvalidInputError("Coupled ensembles must share the Brownian seed.")


def _gap_paths(u1: EnsembleField, u2: EnsembleField, i: int, X: np.ndarray, vol: float,
               shift: int = 0) -> np.ndarray:
    a = u1.interpolate(i, X)
    b = u2.interpolate(i, X)
    if shift:
        b = np.roll(b, shift, axis=0)
    d = a - b
    return np.sum(d * d, axis=1) * vol


def observation_gap(u1: EnsembleField, u2: EnsembleField, w: ObservationWindow) -> Estimate:
    """sup over stored t of E int_{O0} |u1 - u2|^2 over common Brownian paths."""
    _require_coupled(u1, u2)
    X = w.nodes()
    best: Optional[Estimate] = None
    for i in w.slices(u1):
        est = estimate_from_paths(_gap_paths(u1, u2, int(i), X, w.cell_volume), "observation_gap",
                                  {"t": float(u1.times[i])})
        if best is None or est.value > best.value:
            best = est
    return best


def observation_gap_variance(u1: EnsembleField, u2: EnsembleField, w: ObservationWindow) -> Tuple[float, float]:
    """
    Per-path variance of the gap integrand at the final window slice with
    common paths and with paths paired out of step.
    """
    _require_coupled(u1, u2)
    if u1.N < 3:
        raise InvalidInputError("Variance comparison needs at least 3 paths.")
    i = int(w.slices(u1)[-1])
    X = w.nodes()
    coupled = _gap_paths(u1, u2, i, X, w.cell_volume)
    independent = _gap_paths(u1, u2, i, X, w.cell_volume, shift=1)
    return float(np.var(coupled, ddof=1)), float(np.var(independent, ddof=1))


# ---------- masses and energies ----------
def ball_mass(u: EnsembleField, t0: float, x0, r: float) -> Estimate:
    """E int_{B_r(x0) cap G(t0)} u(t0)^2."""
    if not r > 0:
        raise InvalidInputError("Radius must be positive.")
    i = u.slice_index(t0)
    wts = u.ball_weights(i, x0, r)
    if not np.any(wts > 0):
        raise InvalidInputError("Ball does not meet the domain at t0.")
    per_path = (u.values[:, i, :] ** 2) @ wts
    return estimate_from_paths(per_path, "ball_mass",
                               {"t0": float(t0), "x0": np.atleast_1d(x0).tolist(), "r": float(r)})


def sphere_mass(u: EnsembleField, t0: float, x0, r: float) -> Estimate:
    """sqrt(E int_{B_r(x0) cap G(t0)} u(t0)^2)."""
    return sqrt_estimate(ball_mass(u, t0, x0, r), "sphere_mass")


def cylinder_mass(u: EnsembleField, t_lo: float, t_hi: float, x0, R: float) -> Estimate:
    """E int_{t_lo}^{t_hi} int_{B_R(x0) cap G(t)} u^2 by trapezoid over stored slices."""
    sel, tw = u.window(t_lo, t_hi)
    total = np.zeros(u.N)
    hit = False
    for i, w in zip(sel, tw):
        wts = u.ball_weights(int(i), x0, R)
        hit = hit or bool(np.any(wts > 0))
        if w:
            total += w * ((u.values[:, i, :] ** 2) @ wts)
    if not hit:
        raise InvalidInputError("Cylinder does not meet the domain family.")
    return estimate_from_paths(total, "cylinder_mass", {"t_lo": t_lo, "t_hi": t_hi, "R": R})


def cylinder_energy(u: EnsembleField, t0: float, x0, R: float, clipped: bool = False) -> Estimate:
    """
    sqrt(R^{-2} E int int u^2) over (t0 - R^2, t0) x (B_R cap G(t)); with
    clipped=True the window starts at max(0, t0 - R^2).
    """
    if not R > 0:
        raise InvalidInputError("Radius must be positive.")
    t_lo = t0 - R * R
    if clipped:
        t_lo = max(0.0, t_lo)
    elif t_lo < u.times[0] - 1e-12:
        raise InvalidInputError("Cylinder starts before t = 0; use the clipped energy.")
    mass = cylinder_mass(u, t_lo, t0, x0, R)
    scaled = Estimate(value=mass.value / R ** 2, stderr=mass.stderr / R ** 2, name="cylinder_energy",
                      params={"t0": float(t0), "R": float(R), "clipped": bool(clipped)})
    return sqrt_estimate(scaled)
