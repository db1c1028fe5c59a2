# -*- coding: utf-8 -*-

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Tuple

import numpy as np

from domain.errors import InvalidInputError

ETA1_MAX = math.exp(-1.0)


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float = 0.0
    name: str = ""
    params: Dict[str, object] = field(default_factory=dict)

    def to_record(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "value": float(self.value),
            "stderr": float(self.stderr),
            "params": dict(self.params),
        }

    def named(self, name: str, **params) -> "Estimate":
        merged = dict(self.params)
        merged.update(params)
        return Estimate(self.value, self.stderr, name, merged)


@dataclass(frozen=True)
class GeometryParams:
    R0: float
    E: float
    rho0: float
    alpha: float
    d0: float = 0.1
    eta1: float = 0.3

    def __post_init__(self):
        if not self.R0 > 0:
            raise InvalidInputError("R0 must be positive.")
        if not self.E >= 1:
            raise InvalidInputError("E must be >= 1.")
        if not self.rho0 > 0:
            raise InvalidInputError("rho0 must be positive.")
        if not (0 < self.alpha <= math.pi / 4):
            raise InvalidInputError("alpha must lie in (0, pi/4].")
        if not (0 < self.eta1 < ETA1_MAX):
            raise InvalidInputError("eta1 must lie in (0, 1/e).")


@dataclass(frozen=True, eq=False)
class DomainSnapshot:
    time: float
    interior_points: np.ndarray  # (m, n)
    boundary_points: np.ndarray  # (k, n)
    normals: np.ndarray  # (k, n), outward, unit
    spacing: float
    flagged_empty: bool = False

    @property
    def dim(self) -> int:
        pts = self.interior_points if self.interior_points.size else self.boundary_points
        return int(pts.shape[1]) if pts.ndim == 2 else 1

    @property
    def tolerance(self) -> float:
        return 2.0 * self.spacing

    @property
    def is_empty(self) -> bool:
        return self.interior_points.shape[0] == 0 and self.boundary_points.shape[0] == 0

    def all_points(self) -> np.ndarray:
        return np.vstack([self.interior_points, self.boundary_points])


@dataclass(frozen=True)
class WeightBoundsReport:
    k: int
    min_ratio_inner: float  # min of e^phi / (8 lam / rho~^2)^lam over D
    fitted_C: float
    n_inner: int
    n_annulus: int


@dataclass(frozen=True)
class IsometryReport:
    mc_value: float
    mc_stderr: float
    expected: float
    relative_error: float
    within_band: bool


@dataclass(frozen=True)
class KSReport:
    statistic: float
    pvalue: float
    passed: bool


@dataclass(frozen=True)
class CaccioppoliReport:
    grad_energy: float
    mass: float
    ratio: float  # grad / (mass * [1/R^2 + 1/(rho2-rho1)^2])


@dataclass(frozen=True)
class TwoSphereParams:
    r: float
    rho: float
    R: float
    x0: Tuple[float, ...]
    t0: float
    eta1: float = 0.3
    regime: str = "interior"  # interior | boundary | zero_initial
    C_exp: float = 1.0

    @property
    def theta(self) -> float:
        return theta_exponent(self.R, self.r, self.C_exp)


def theta_exponent(R: float, r: float, C_exp: float) -> float:
    return 1.0 / (C_exp * (math.log(R) - math.log(r)))


@dataclass(frozen=True)
class TwoSphereReport:
    params: TwoSphereParams
    eps1: Estimate
    energy: Estimate
    lhs: Estimate
    variant: str = "E1"  # E1 | E2

    @property
    def trivial(self) -> bool:
        return self.lhs.value == 0.0 and self.eps1.value == 0.0


@dataclass(frozen=True)
class TwoSphereFit:
    C_mult: float
    C_exp: float
    slacks: Tuple[float, ...]  # log(bound / lhs) per used report
    n_used: int
    n_excluded: int


@dataclass(frozen=True)
class TwoSphereValidation:
    n_checked: int
    violations: Tuple[int, ...]  # indices into the hold-out list

    @property
    def passed(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class SucpReport:
    radii: Tuple[float, ...]
    masses: Tuple[float, ...]
    stderrs: Tuple[float, ...]
    slope: float
    slope_stderr: float
    vanishing_order: float
    local_slopes: Tuple[float, ...]
    inconclusive: bool
    finite_order: bool


@dataclass(frozen=True)
class IterationState:
    x1: float
    C1: float
    s: float
    n: int


@dataclass(frozen=True, eq=False)
class ConeChain:
    x0: np.ndarray
    zeta: np.ndarray
    mu: np.ndarray  # (k_bar,)
    centers: np.ndarray  # (k_bar, n)
    rho: np.ndarray  # (k_bar,)
    cone_ratio: float
    k_bar: int
    bracket: Tuple[float, float]
    sigma_tilde: float
    rho0: float
    alpha: float


@dataclass(frozen=True)
class SmallPropagationReport:
    sigma_local: float
    masses: Tuple[float, ...]
    C1: float
    s: float
    iterated_bound: float
    pointwise_bound: float
    measured: float
    measured_stderr: float
    consistent: bool
    informative: bool


@dataclass(frozen=True)
class CarlemanResidualReport:
    name: str
    lam: float
    a: float
    b: float
    lhs_u: float
    lhs_grad: float
    rhs_source: float
    M: Tuple[float, float, float, float]
    N: Tuple[float, float]
    margin: float
    margin_stderr: float = 0.0
    log_scale: float = 0.0  # every term is multiplied by exp(-log_scale)

    @property
    def lhs(self) -> float:
        return self.lhs_u + self.lhs_grad

    @property
    def rhs(self) -> float:
        return self.rhs_source + sum(self.M) + sum(self.N)

    def to_record(self) -> Dict[str, object]:
        rec = asdict(self)
        rec["M"] = list(self.M)
        rec["N"] = list(self.N)
        return rec


@dataclass(frozen=True)
class StabilityRecord:
    eps_tilde: float
    d: float
    d_m: float
    gamma: float
    t0: float
    amplitude: float = 0.0
    eps_stderr: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.eps_tilde < 1.0):
            raise InvalidInputError(f"eps_tilde must lie in (0,1), got {self.eps_tilde!r}.")
        if not (self.d >= self.d_m >= 0.0):
            raise InvalidInputError("StabilityRecord requires d >= d_m >= 0.")
        if not self.gamma >= 1.0:
            raise InvalidInputError("gamma must be >= 1.")


@dataclass(frozen=True)
class StabilityFit:
    A: float
    q: float
    q_stderr: float
    n_records: int
    q_lower95: float

    @property
    def significant(self) -> bool:
        return self.q_lower95 > 0.0


@dataclass(frozen=True)
class DomainDifferenceReport:
    eps_tilde: float
    energy_1: float
    energy_2: float
    bound_loglog: float
    bound_log: float
    lower: float
    empty_difference: bool


@dataclass(frozen=True)
class UniquenessResult:
    gap: float
    gap_stderr: float
    d: float
    noise_floor: float

    @property
    def above_floor(self) -> bool:
        return self.gap > self.noise_floor


@dataclass(frozen=True)
class ReconstructionResult:
    coeffs: Tuple[float, ...]
    misfit: float
    evaluations: int
    at_box_boundary: bool
    flagged: bool  # best fit sits on the admissible box with nonzero misfit


@dataclass(frozen=True)
class GeometryCheck:
    name: str
    passed: bool
    detail: Dict[str, object] = field(default_factory=dict)
