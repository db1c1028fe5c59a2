# core/inverse.py
# -*- coding: utf-8 -*-
"""
Unknown moving boundary from interior observations: uniqueness probes,
derivative-free reconstruction and the logarithmic stability sweep.
"""

from __future__ import annotations

import itertools
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from core.functionals import ObservationWindow, ball_mass, observation_gap
from core.geometry import check_interior_ball, check_speed_bound, hausdorff_distance, modified_distance
from core.motion import EndpointLaw, IntervalDomain, MovingDomain, RadialFourierLaw, disk
from core.solver import EnsembleField, SPDECoefficients, build_reference_grid, solve
from core.stochastic import Ensemble
from domain.errors import (
    InsufficientDataError,
    InvalidInputError,
    NumericalError,
    PreconditionError,
)
from domain.models import (
    DomainDifferenceReport,
    GeometryCheck,
    ReconstructionResult,
    StabilityFit,
    StabilityRecord,
    UniquenessResult,
)

logger = logging.getLogger(__name__)

RADIAL_TERMS = ("cos", "sin")


# ---------- boundary parametrization ----------
@dataclass(frozen=True)
class BoundaryParametrization:
    """
    kind = "endpoint": s(t) = L + sum_j c_j basis_j(t/T) on (0, s(t)).
    kind = "radial":   r(t, phi) = r0 (1 + (t/T) sum_j c_j trig_j(k_j phi)),
                       terms named "cos<k>" / "sin<k>".
    """

    kind: str
    basis: Tuple[str, ...]
    coeffs: Tuple[float, ...]
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    horizon: float
    length: float = 1.0
    center: Tuple[float, ...] = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("endpoint", "radial"):
            raise InvalidInputError(f"Unknown boundary parametrization {self.kind!r}.")
        n = len(self.basis)
        if not (len(self.coeffs) == len(self.lower) == len(self.upper) == n) or n == 0:
            raise InvalidInputError("basis, coeffs and box bounds must have the same nonzero length.")
        if n > 8:
            raise InvalidInputError("At most 8 boundary parameters are supported.")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise InvalidInputError("Admissible box needs lower <= upper.")
        if self.kind == "radial":
            for b in self.basis:
                if b[:3] not in RADIAL_TERMS or not b[3:].isdigit():
                    raise InvalidInputError(f"Radial term {b!r} must look like cos<k> or sin<k>.")

    @property
    def size(self) -> int:
        return len(self.basis)

    def clip(self, coeffs: Sequence[float]) -> Tuple[float, ...]:
        return tuple(float(min(max(c, lo), hi)) for c, lo, hi in zip(coeffs, self.lower, self.upper))

    def with_coeffs(self, coeffs: Sequence[float]) -> "BoundaryParametrization":
        return replace(self, coeffs=self.clip(coeffs))

    def in_box(self, coeffs: Sequence[float], tol: float = 0.0) -> bool:
        return all(lo - tol <= c <= hi + tol for c, lo, hi in zip(coeffs, self.lower, self.upper))

    def on_box_boundary(self, coeffs: Sequence[float], tol: float = 1e-12) -> bool:
        return any(abs(c - lo) <= tol or abs(c - hi) <= tol
                   for c, lo, hi in zip(coeffs, self.lower, self.upper) if hi > lo)

    def build_domain(self, coeffs: Optional[Sequence[float]] = None) -> MovingDomain:
        c = self.coeffs if coeffs is None else tuple(float(v) for v in coeffs)
        if self.kind == "endpoint":
            law = EndpointLaw(self.length, list(zip(self.basis, c)), self.horizon)
            return MovingDomain(IntervalDomain(self.length), law, self.horizon)
        modes = []
        for b, v in zip(self.basis, c):
            k = int(b[3:])
            modes.append((k, v, 0.0) if b.startswith("cos") else (k, 0.0, v))
        law = RadialFourierLaw(self.length, self.center, modes, self.horizon)
        return MovingDomain(disk(self.length, self.center), law, self.horizon)

    def corners(self) -> List[Tuple[float, ...]]:
        return [tuple(p) for p in itertools.product(*zip(self.lower, self.upper))]

    def verify_admissible(self, R0: float, E: float, times: Sequence[float], spacing: float,
                          max_corners: int = 16) -> List[GeometryCheck]:
        """Interior-ball and speed checks at the box center and (up to max_corners) corners."""
        center = tuple(0.5 * (lo + hi) for lo, hi in zip(self.lower, self.upper))
        out = []
        for coeffs in [center] + self.corners()[:max_corners]:
            dom = self.build_domain(coeffs)
            ball = all(check_interior_ball(dom.snapshot(float(t), spacing), R0) for t in times)
            speed = check_speed_bound(dom, E, times, spacing)
            out.append(GeometryCheck(name="admissible", passed=bool(ball and speed),
                                     detail={"coeffs": list(coeffs), "interior_ball": bool(ball),
                                             "speed_bound": bool(speed)}))
        return out


# ---------- forward model ----------
@dataclass
class ForwardModel:
    """Everything but the domain: coefficient forms, grid, coupled noise."""

    forms: Dict[str, Dict[str, object]]
    ensemble: Ensemble
    cells: int
    F: float = 1.0
    kappa0: float = math.e
    theta: float = 0.5
    stride: int = 1
    workers: int = 1
    check_condition: bool = True
    _evaluations: int = field(default=0, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def coefficients(self, domain: MovingDomain) -> SPDECoefficients:
        return SPDECoefficients.from_forms(self.forms, domain, F=self.F, kappa0=self.kappa0)

    def simulate(self, domain: MovingDomain) -> EnsembleField:
        with self._lock:
            self._evaluations += 1
        grid = build_reference_grid(domain.reference, self.cells)
        return solve(domain, self.coefficients(domain), self.ensemble, grid, theta=self.theta,
                     stride=self.stride, workers=self.workers, check_condition=self.check_condition)

    @property
    def evaluations(self) -> int:
        return self._evaluations


def stability_gamma(t: float, kappa0: float, n: int) -> float:
    """(ln kappa0)^2 + e^{1 / t^{n/2}}."""
    if not t > 0:
        raise InvalidInputError("t must be positive.")
    if kappa0 < math.e:
        raise InvalidInputError("kappa0 must be >= e.")
    expo = 1.0 / t ** (n / 2.0)
    return math.log(kappa0) ** 2 + (math.exp(expo) if expo < 700 else math.inf)


# ---------- uniqueness ----------
def _same_initial_domain(d1: MovingDomain, d2: MovingDomain, spacing: float, tol: float = 1e-9) -> bool:
    return hausdorff_distance(d1.snapshot(0.0, spacing), d2.snapshot(0.0, spacing)) <= tol


def uniqueness_probe(true_domain: MovingDomain, candidate: MovingDomain, model: ForwardModel,
                     window: ObservationWindow, t0: Optional[float] = None,
                     spacing: float = 0.02, nsigma: float = 3.0) -> UniquenessResult:
    """Observation gap between the two forward solutions and d(G1(t0), G2(t0))."""
    if not _same_initial_domain(true_domain, candidate, spacing):
        raise PreconditionError("initial domains differ", bound="G1(0) = G2(0)")
    u1 = model.simulate(true_domain)
    u2 = model.simulate(candidate)
    t0 = float(u1.times[-1]) if t0 is None else float(t0)
    w = replace(window, t_end=t0)
    gap = observation_gap(u1, u2, w)
    d = hausdorff_distance(true_domain.snapshot(t0, spacing), candidate.snapshot(t0, spacing))
    return UniquenessResult(gap=gap.value, gap_stderr=gap.stderr, d=d, noise_floor=nsigma * gap.stderr)


# ---------- reconstruction ----------
def _misfit(param: BoundaryParametrization, coeffs: Tuple[float, ...], model: ForwardModel,
            observed: EnsembleField, window: ObservationWindow) -> float:
    try:
        u = model.simulate(param.build_domain(coeffs))
        value = observation_gap(u, observed, window).value
    except NumericalError as exc:
        raise NumericalError(f"Forward solve failed at coeffs {list(coeffs)}: {exc}",
                             params=list(coeffs)) from exc
    if not math.isfinite(value):
        raise NumericalError(f"Non-finite misfit at coeffs {list(coeffs)}.", params=list(coeffs))
    return value


def _evaluate_all(points: List[Tuple[float, ...]], fn: Callable[[Tuple[float, ...]], float],
                  workers: int) -> List[float]:
    if workers <= 1 or len(points) <= 1:
        return [fn(p) for p in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, points))


def reconstruct_boundary(observed: EnsembleField, param: BoundaryParametrization, model: ForwardModel,
                         window: ObservationWindow, search: str = "grid", grid_points: int = 9,
                         initial: Optional[Sequence[float]] = None, max_rounds: int = 30,
                         step_tol: float = 1e-4, workers: int = 1,
                         progress: Optional[Callable[[int, float], None]] = None
                         ) -> Tuple[BoundaryParametrization, ReconstructionResult]:
    """
    Minimize sup_t E int_{O0} |u(theta) - u_obs|^2 over the admissible box,
    by exhaustive grid or by coordinate descent with shrinking steps.
    """
    cache: Dict[Tuple[float, ...], float] = {}

    def evaluate(points: List[Tuple[float, ...]]) -> List[float]:
        todo = [p for p in dict.fromkeys(points) if p not in cache]
        values = _evaluate_all(todo, lambda c: _misfit(param, c, model, observed, window), workers)
        cache.update(zip(todo, values))
        if progress is not None:
            try:
                progress(len(cache), min(cache.values()))
            except Exception:
                pass
        return [cache[p] for p in points]

    if search == "grid":
        if grid_points < 2:
            raise InvalidInputError("grid_points must be >= 2.")
        axes = [np.linspace(lo, hi, grid_points) if hi > lo else np.array([lo])
                for lo, hi in zip(param.lower, param.upper)]
        points = [tuple(float(v) for v in p) for p in itertools.product(*axes)]
        values = evaluate(points)
        k = int(np.argmin(values))
        best, best_val = points[k], values[k]
    elif search == "coordinate":
        start = initial if initial is not None else [0.5 * (lo + hi) for lo, hi in zip(param.lower, param.upper)]
        best = param.clip(start)
        best_val = evaluate([best])[0]
        steps = [0.25 * (hi - lo) for lo, hi in zip(param.lower, param.upper)]
        for _ in range(max_rounds):
            improved = False
            for i in range(param.size):
                if steps[i] <= 0:
                    continue
                trial = []
                for sgn in (-1.0, 1.0):
                    c = list(best)
                    c[i] += sgn * steps[i]
                    trial.append(param.clip(c))
                for c, v in zip(trial, evaluate(trial)):
                    if v < best_val:
                        best, best_val, improved = c, v, True
            if not improved:
                steps = [s * 0.5 for s in steps]
                if max(steps) < step_tol:
                    break
    else:
        raise InvalidInputError(f"Unknown search {search!r}; expected 'grid' or 'coordinate'.")

    on_edge = param.on_box_boundary(best)
    result = ReconstructionResult(coeffs=tuple(best), misfit=float(best_val), evaluations=len(cache),
                                  at_box_boundary=bool(on_edge), flagged=bool(on_edge and best_val > 0))
    logger.info("reconstruction (%s): coeffs=%s misfit=%.3e after %d evaluations",
                search, list(best), best_val, len(cache))
    return param.with_coeffs(best), result


# ---------- stability ----------
@dataclass(frozen=True)
class ExcludedRecord:
    amplitude: float
    t0: float
    eps_tilde: float
    eps_stderr: float
    reason: str


def stability_sweep(param: BoundaryParametrization, direction: Sequence[float], amplitudes: Sequence[float],
                    model: ForwardModel, window: ObservationWindow, t0s: Sequence[float],
                    kappa0: float = math.e, spacing: float = 0.01, nsigma: float = 3.0,
                    progress: Optional[Callable[[int, int], None]] = None
                    ) -> Tuple[List[StabilityRecord], List[ExcludedRecord]]:
    """
    Perturb the reference boundary along `direction` by each amplitude and
    record (eps~, d, d_m, gamma) at every t0. Records with eps~ within
    nsigma standard errors of zero or outside (0, 1) are set aside.
    """
    if len(direction) != param.size:
        raise InvalidInputError("direction must have one entry per boundary parameter.")
    base = param.build_domain()
    u_ref = model.simulate(base)
    n = base.dim
    records: List[StabilityRecord] = []
    excluded: List[ExcludedRecord] = []
    for j, h in enumerate(sorted(float(a) for a in amplitudes)):
        coeffs = [c + h * d for c, d in zip(param.coeffs, direction)]
        if not param.in_box(coeffs, tol=1e-12):
            raise InvalidInputError(f"Perturbation amplitude {h:g} leaves the admissible box.")
        dom = param.build_domain(coeffs)
        u = model.simulate(dom)
        for t0 in t0s:
            gap = observation_gap(u, u_ref, replace(window, t_end=float(t0)))
            d = hausdorff_distance(base.snapshot(float(t0), spacing), dom.snapshot(float(t0), spacing))
            d_m = min(modified_distance(base.snapshot(float(t0), spacing), dom.snapshot(float(t0), spacing)), d)
            if not 0.0 < gap.value < 1.0:
                excluded.append(ExcludedRecord(h, float(t0), gap.value, gap.stderr, "eps_tilde outside (0,1)"))
                continue
            if gap.value <= nsigma * gap.stderr:
                excluded.append(ExcludedRecord(h, float(t0), gap.value, gap.stderr, "below noise floor"))
                continue
            records.append(StabilityRecord(eps_tilde=gap.value, d=d, d_m=d_m,
                                           gamma=stability_gamma(float(t0), kappa0, n), t0=float(t0),
                                           amplitude=h, eps_stderr=gap.stderr))
        if progress is not None:
            try:
                progress(j + 1, len(amplitudes))
            except Exception:
                pass
    logger.info("stability sweep: %d records, %d excluded", len(records), len(excluded))
    return records, excluded


def fit_stability(records: Sequence[StabilityRecord], confidence: float = 0.95) -> StabilityFit:
    """Least squares for log d = log A - q log|ln eps~|; one-sided lower confidence bound on q."""
    usable = [r for r in records if r.d > 0 and abs(math.log(r.eps_tilde)) > 0]
    if len(usable) < 5:
        raise InsufficientDataError(f"fit_stability needs >= 5 records with d > 0, got {len(usable)}.")
    x = np.array([math.log(abs(math.log(r.eps_tilde))) for r in usable])
    y = np.array([math.log(r.d) for r in usable])
    if np.ptp(x) == 0:
        raise InsufficientDataError("All records share the same eps_tilde.")
    fit = stats.linregress(x, y)
    q = -float(fit.slope)
    se = float(fit.stderr)
    dof = len(usable) - 2
    q_low = q - float(stats.t.ppf(confidence, dof)) * se
    return StabilityFit(A=math.exp(float(fit.intercept)), q=q, q_stderr=se, n_records=len(usable),
                        q_lower95=q_low)


def plot_pairs(records: Sequence[StabilityRecord]) -> List[Tuple[float, float]]:
    """(|ln eps~|, d) pairs."""
    return [(abs(math.log(r.eps_tilde)), r.d) for r in records]


def q_ordering(per_t0: Dict[float, Optional[float]]) -> Dict[str, object]:
    """
    Fitted q per observation time, in increasing t0. The rate is expected to be
    no larger at an earlier t0; `ordered` is None with fewer than two fits.
    """
    pairs = sorted((float(t), float(q)) for t, q in per_t0.items() if q is not None)
    qs = [q for _, q in pairs]
    ordered = None if len(pairs) < 2 else all(b >= a for a, b in zip(qs, qs[1:]))
    return {"t0": [t for t, _ in pairs], "q": qs, "ordered": ordered}


# ---------- domain difference ----------
def common_interior_ball(d1: MovingDomain, d2: MovingDomain, t: float, spacing: float
                         ) -> Tuple[np.ndarray, float]:
    """(z, rho_bar): the deepest sampled point of G1(t) cap G2(t) and half its depth."""
    X = d1.tau(t, d1.reference.interior_sample(spacing))
    depth = -np.maximum(d1.sdf(t, X), d2.sdf(t, X))
    if depth.size == 0 or not np.max(depth) > 0:
        raise InvalidInputError(f"G1 and G2 share no interior sample at t = {t:g}.")
    k = int(np.argmax(depth))
    return X[k], 0.5 * float(depth[k])


def _outside_energy(u: EnsembleField, other: MovingDomain, i: int) -> Tuple[float, bool]:
    X = u.physical_points(i)
    mask = other.sdf(float(u.times[i]), X) > 0
    w = u.quadrature_weights(i) * mask
    if not np.any(w > 0):
        return 0.0, False
    return float(np.mean((u.values[:, i, :] ** 2) @ w)), True


def domain_difference_energy(u1: EnsembleField, u2: EnsembleField, eps_tilde: float,
                             kappa0: float = math.e, C: float = 1.0, z=None,
                             rho_bar: Optional[float] = None) -> DomainDifferenceReport:
    """
    sup_t E int_{G1(t) minus G2(t)} u1^2 and its mirror, the two decay
    envelopes at eps~ and the interior floor E int_{B_rho_bar(z)} u1^2.
    """
    if u1.N != u2.N or not np.array_equal(u1.times, u2.times) or u1.base_seed != u2.base_seed:
        raise InvalidInputError("domain_difference_energy needs coupled ensembles.")
    if not 0 < eps_tilde < 1:
        raise InvalidInputError("eps_tilde must lie in (0, 1).")
    e1 = e2 = 0.0
    any_diff = False
    for i in range(u1.n_slices):
        a, hit_a = _outside_energy(u1, u2.domain, i)
        b, hit_b = _outside_energy(u2, u1.domain, i)
        e1, e2 = max(e1, a), max(e2, b)
        any_diff = any_diff or hit_a or hit_b
    n = u1.dim
    L = abs(math.log(eps_tilde))
    loglog = kappa0 ** C * math.log(L) ** (-1.0 / n) if L > 1.0 else math.inf
    log_b = kappa0 ** C * L ** (-1.0 / C)
    lower = 0.0
    if z is not None and rho_bar is not None:
        lower = ball_mass(u1, float(u1.times[-1]), z, rho_bar).value
    return DomainDifferenceReport(eps_tilde=float(eps_tilde), energy_1=e1, energy_2=e2,
                                  bound_loglog=loglog, bound_log=log_b, lower=lower,
                                  empty_difference=not any_diff)


def difference_envelope(kind: str, C: float, kappa0: float, eps_tilde: float, n: int) -> float:
    L = abs(math.log(eps_tilde))
    if kind == "loglog":
        return kappa0 ** C * math.log(L) ** (-1.0 / n) if L > 1.0 else math.inf
    if kind == "log":
        return kappa0 ** C * L ** (-1.0 / C)
    raise InvalidInputError(f"Unknown envelope {kind!r}; expected 'loglog' or 'log'.")


def fit_difference_decay(eps: Sequence[float], energies: Sequence[float], n: int, kind: str = "loglog",
                         kappa0: float = math.e, C_max: float = 1e3, iters: int = 80) -> float:
    """Smallest C >= 1/2 (bisection) with energy <= envelope(C) at every sweep point."""
    pairs = [(float(e), float(v)) for e, v in zip(eps, energies)]
    if len(pairs) < 2:
        raise InsufficientDataError("fit_difference_decay needs at least two points.")
    if any(not 0 < e < 1 for e, _ in pairs):
        raise InvalidInputError("eps_tilde values must lie in (0, 1).")

    def ok(C: float) -> bool:
        return all(v <= difference_envelope(kind, C, kappa0, e, n) for e, v in pairs)

    lo, hi = 0.5, 1.0
    if ok(lo):
        return lo
    while not ok(hi):
        lo = hi
        hi *= 2.0
        if hi > C_max:
            return math.inf
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi
