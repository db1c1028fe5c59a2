# core/solver.py
# -*- coding: utf-8 -*-
"""
Forward solver on a moving domain through the fixed-cylinder pullback.

v(t, y) = u(t, tau(t, y)) satisfies, on the reference domain G(0),

    dv = [ sum_i <D^2 v d_i rho, d_i rho> + grad v . (sum_i d_ii rho - rho_t + J a1) + b1 v ] dt
         + c1 v dW,

with rho = tau(t, .)^{-1} and J = D_x rho. The boundary of G(0) does not
move, so Dirichlet rows are fixed once on the reference grid. Time stepping
is a theta scheme on the deterministic part with the Ito noise term
explicit; theta = 1 is the drift-implicit Euler-Maruyama step.

The default is theta = 0.5 (Crank-Nicolson drift), not the drift-implicit
step. It is second order in dt for the drift and keeps the same strong
order 1/2 in the noise. It is not L-stable, so rough initial data can
leave slowly decaying oscillations in the first steps; set
`grid.theta = 1` for those runs.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import splu

from core import forms
from core.motion import IntervalDomain, MovingDomain, ReferenceDomain
from core.stochastic import Ensemble
from core.weights import spatial_cutoff
from domain.errors import (
    DomainError,
    InvalidInputError,
    NumericalError,
    PreconditionError,
    SingularGeometryError,
)
from domain.models import CaccioppoliReport, Estimate

logger = logging.getLogger(__name__)

DET_TOL = 1e-10
CHUNK_PATHS = 64


# ---------- coefficients ----------
def _sup(values) -> float:
    arr = np.abs(np.asarray(values, dtype=float))
    return float(np.max(arr)) if arr.size else 0.0


@dataclass(frozen=True, eq=False)
class SPDECoefficients:
    """
    du - lap u dt = (a1 . grad u + b1 u) dt + c1 u dW,  u = f on Gamma,
    u = 0 on the moving part, u(0) = u0.
    """

    a1: forms.VectorField
    b1: forms.ScalarField
    c1: forms.ScalarField
    f: forms.ScalarField
    u0: forms.ScalarField
    F: float = 0.0
    kappa0: float = math.e
    norm_a1: float = 0.0
    norm_b1: float = 0.0
    norm_c1: float = 0.0
    autonomous: bool = True
    description: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kappa0 < math.e:
            raise InvalidInputError("kappa0 must be >= e.")
        if self.F < 0:
            raise InvalidInputError("F must be >= 0.")

    @property
    def q1(self) -> float:
        return self.norm_a1 ** 2 + 2 * self.norm_b1 + self.norm_c1 ** 2 + 1.0

    @property
    def q2(self) -> float:
        return 0.5 * self.norm_a1 ** 2 + self.norm_b1 + 0.5 * self.norm_c1 ** 2 + 1.0

    @classmethod
    def from_forms(cls, spec: Dict[str, Dict[str, object]], domain: MovingDomain,
                   F: float = 0.0, kappa0: float = math.e, spacing: float = 0.05,
                   samples: int = 9) -> "SPDECoefficients":
        """
        spec maps 'a1', 'b1', 'c1', 'f', 'u0' to {'name': ..., 'params': {...}}.
        Sup norms are measured on domain snapshots at `samples` times.
        """
        dim = domain.dim
        built = {}
        for key in ("b1", "c1", "f", "u0"):
            entry = spec.get(key, {"name": "zero", "params": {}})
            built[key] = forms.scalar_form(str(entry["name"]), entry.get("params", {}), dim)
        a1_entry = spec.get("a1", {"name": "zero", "params": {}})
        built["a1"] = forms.vector_form(str(a1_entry["name"]), a1_entry.get("params", {}), dim)
        autonomous = all(
            forms.is_autonomous(str(spec.get(k, {"name": "zero"})["name"])) for k in ("a1", "b1", "c1")
        )
        coeffs = cls(a1=built["a1"], b1=built["b1"], c1=built["c1"], f=built["f"], u0=built["u0"],
                     F=float(F), kappa0=float(kappa0), autonomous=autonomous,
                     description={k: dict(v) for k, v in spec.items()})
        norms = coeffs.measure_norms(domain, np.linspace(0.0, domain.horizon, samples), spacing)
        return cls(a1=coeffs.a1, b1=coeffs.b1, c1=coeffs.c1, f=coeffs.f, u0=coeffs.u0,
                   F=coeffs.F, kappa0=coeffs.kappa0, norm_a1=norms["a1"], norm_b1=norms["b1"],
                   norm_c1=norms["c1"], autonomous=autonomous, description=coeffs.description)

    def measure_norms(self, domain: MovingDomain, times: Sequence[float], spacing: float) -> Dict[str, float]:
        out = {"a1": 0.0, "b1": 0.0, "c1": 0.0}
        for t in times:
            snap = domain.snapshot(float(t), spacing)
            X = snap.all_points()
            out["a1"] = max(out["a1"], _sup(np.linalg.norm(self.a1(t, X), axis=1)))
            out["b1"] = max(out["b1"], _sup(self.b1(t, X)))
            out["c1"] = max(out["c1"], _sup(self.c1(t, X)))
        return out

    def norms_consistent(self, domain: MovingDomain, times: Sequence[float], spacing: float,
                         rtol: float = 1e-9) -> bool:
        got = self.measure_norms(domain, times, spacing)
        stored = {"a1": self.norm_a1, "b1": self.norm_b1, "c1": self.norm_c1}
        return all(abs(got[k] - stored[k]) <= rtol * max(1.0, stored[k]) for k in got)

    def check_condition(self, domain: MovingDomain, times: Sequence[float], spacing: float) -> None:
        """sup_Gamma f(t)^2 >= F > 0 at every sampled time."""
        if not self.F > 0:
            raise PreconditionError("boundary datum bound F must be positive", bound="F > 0")
        Yb = domain.reference.boundary_sample(spacing)[0]
        Yg = Yb[domain.fixed_boundary(Yb)]
        if Yg.shape[0] == 0:
            raise PreconditionError("reference domain has no fixed boundary samples", bound="Gamma nonempty")
        for t in times:
            if t <= 0:
                continue
            vals = self.f(float(t), domain.tau(float(t), Yg))
            if float(np.max(vals * vals)) < self.F:
                raise PreconditionError(
                    f"sup over Gamma of f^2 falls below F = {self.F:g} at t = {t:g}",
                    bound="||f(t)||^2 >= F",
                )


# ---------- reference grid ----------
@dataclass(frozen=True, eq=False)
class ReferenceGrid:
    axes: Tuple[np.ndarray, ...]
    points: np.ndarray  # (P, n), C-order over axes
    interior: np.ndarray  # bool (P,)
    gamma: np.ndarray  # bool (P,), Dirichlet nodes carrying f
    weights: np.ndarray  # reference quadrature weights (P,)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(float(a[1] - a[0]) for a in self.axes)

    @property
    def strides(self) -> Tuple[int, ...]:
        shape = self.shape
        return tuple(int(np.prod(shape[k + 1:], dtype=int)) for k in range(len(shape)))

    @property
    def interior_index(self) -> np.ndarray:
        return np.flatnonzero(self.interior)

    @property
    def boundary_index(self) -> np.ndarray:
        return np.flatnonzero(~self.interior)

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    def describe(self) -> str:
        return "x".join(str(s) for s in self.shape)


def build_reference_grid(reference: ReferenceDomain, cells: int) -> ReferenceGrid:
    """
    1-D: nodes 0..L with the two ends as Dirichlet nodes, Gamma at y = 0.
    n-D: uniform box grid around G(0) with a two-cell margin; interior where
    sdf < 0, cut-cell weights h^n * clip(1/2 - sdf/h, 0, 1).
    """
    if cells < 4:
        raise InvalidInputError("Grid needs at least 4 cells.")
    if isinstance(reference, IntervalDomain):
        nodes = np.linspace(0.0, reference.length, cells + 1)
        pts = nodes[:, None]
        interior = np.zeros(nodes.size, dtype=bool)
        interior[1:-1] = True
        gamma = reference.fixed_boundary(pts) & ~interior
        h = nodes[1] - nodes[0]
        w = np.full(nodes.size, h)
        w[[0, -1]] = 0.5 * h
        return ReferenceGrid(axes=(nodes,), points=pts, interior=interior, gamma=gamma, weights=w)
    lo, hi = reference.bbox()
    h = float(np.max(hi - lo)) / cells
    axes = tuple(np.arange(lo[k] - 2 * h, hi[k] + 2.5 * h, h) for k in range(reference.dim))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    sdf = reference.sdf(pts)
    interior = sdf < -1e-12
    gamma = reference.fixed_boundary(pts) & ~interior & (sdf < 2 * h)
    w = h ** reference.dim * np.clip(0.5 - sdf / h, 0.0, 1.0)
    return ReferenceGrid(axes=axes, points=pts, interior=interior, gamma=gamma, weights=w)


# ---------- pulled-back operator ----------
@dataclass(frozen=True, eq=False)
class PullbackOperator:
    time: float
    A: sparse.csr_matrix  # interior -> interior
    B: sparse.csr_matrix  # boundary values -> interior rows
    c1: np.ndarray  # noise intensity at interior nodes
    min_ellipticity: float
    min_det: float


def assemble_pullback_operator(domain: MovingDomain, grid: ReferenceGrid, t: float,
                               coeffs: Optional[SPDECoefficients] = None,
                               step: float = 1e-5, det_tol: float = DET_TOL) -> PullbackOperator:
    """
    Central differences for
      sum_kl M_kl d_kl v + sum_k drift_k d_k v + b1 v,
      M = J J^T,  drift_k = sum_i H_ki - rho_t,k + sum_i a1_i J_ki.
    For the identity family this is exactly the 3-point / 5-point Laplacian.
    """
    idx = grid.interior_index
    bidx = grid.boundary_index
    Y = grid.points[idx]
    m, n = Y.shape
    J, H, rho_t = domain.jacobians(t, Y, step)
    det = np.linalg.det(J)
    if not np.all(np.isfinite(det)) or float(np.min(np.abs(det))) <= det_tol:
        raise SingularGeometryError(f"Degenerate pullback jacobian at t = {t:g}.")
    M = np.einsum("mki,mli->mkl", J, J)
    min_ell = float(np.min(np.linalg.eigvalsh(M)[:, 0]))
    if min_ell <= 0:
        raise SingularGeometryError(f"Principal part is not elliptic at t = {t:g}.")
    X = domain.tau(t, Y)
    drift = H.sum(axis=2) - rho_t
    if coeffs is not None:
        drift = drift + np.einsum("mi,mki->mk", coeffs.a1(t, X), J)
        b1 = coeffs.b1(t, X)
        c1 = coeffs.c1(t, X)
    else:
        b1 = np.zeros(m)
        c1 = np.zeros(m)

    h = grid.spacing
    s = grid.strides
    r = np.arange(m)
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []

    def add(target, value):
        rows.append(r)
        cols.append(target)
        vals.append(value)

    for k in range(n):
        c2 = M[:, k, k] / h[k] ** 2
        c1k = drift[:, k] / (2 * h[k])
        add(idx + s[k], c2 + c1k)
        add(idx - s[k], c2 - c1k)
        add(idx, -2 * c2)
    for k in range(n):
        for l in range(k + 1, n):
            cm = M[:, k, l] / (2 * h[k] * h[l])
            add(idx + s[k] + s[l], cm)
            add(idx + s[k] - s[l], -cm)
            add(idx - s[k] + s[l], -cm)
            add(idx - s[k] - s[l], cm)
    add(idx, b1)

    L = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, grid.size)
    ).tocsr()
    return PullbackOperator(time=float(t), A=L[:, idx].tocsr(), B=L[:, bidx].tocsr(), c1=c1,
                            min_ellipticity=min_ell, min_det=float(np.min(np.abs(det))))


def boundary_values(domain: MovingDomain, grid: ReferenceGrid, coeffs: SPDECoefficients,
                    t: float) -> np.ndarray:
    """f on Gamma nodes, 0 on the moving part."""
    bidx = grid.boundary_index
    g = np.zeros(bidx.size)
    on_gamma = grid.gamma[bidx]
    if np.any(on_gamma):
        g[on_gamma] = coeffs.f(t, domain.tau(t, grid.points[bidx[on_gamma]]))
    return g


def initial_values(domain: MovingDomain, grid: ReferenceGrid, coeffs: SPDECoefficients) -> np.ndarray:
    full = np.zeros(grid.size)
    idx = grid.interior_index
    full[idx] = coeffs.u0(0.0, domain.tau(0.0, grid.points[idx]))
    full[grid.boundary_index] = boundary_values(domain, grid, coeffs, 0.0)
    return full


def _factor(op: PullbackOperator, dt: float, theta: float):
    n_int = op.A.shape[0]
    lhs = (sparse.identity(n_int, format="csc") - (theta * dt) * op.A).tocsc()
    try:
        return splu(lhs)
    except RuntimeError as exc:
        raise NumericalError(f"LU factorization failed at t = {op.time:g}: {exc}",
                             params=(op.time, dt)) from exc


def _advance(op_k: PullbackOperator, op_k1: PullbackOperator, lu, V: np.ndarray,
             g_k: np.ndarray, g_k1: np.ndarray, dt: float, dW: np.ndarray, theta: float) -> np.ndarray:
    """One theta step for interior values V of shape (n_int, cols)."""
    rhs = V + (dt * theta) * (op_k1.B @ g_k1)[:, None]
    if theta < 1.0:
        rhs = rhs + (dt * (1.0 - theta)) * (op_k.A @ V + (op_k.B @ g_k)[:, None])
    rhs = rhs + op_k.c1[:, None] * V * dW[None, :]
    out = lu.solve(rhs)
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"Non-finite solution after step to t = {op_k1.time:g}.",
                             params=(op_k1.time, dt))
    return out


def step(domain: MovingDomain, grid: ReferenceGrid, coeffs: SPDECoefficients, values: np.ndarray,
         t: float, dt: float, dW, theta: float = 0.5) -> np.ndarray:
    """Advance full-grid values (P,) or (P, cols) from t to t + dt; Dirichlet nodes are re-pinned."""
    V = np.asarray(values, dtype=float)
    single = V.ndim == 1
    V2 = V.reshape(grid.size, -1)
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    if dW.size == 1 and V2.shape[1] > 1:
        dW = np.full(V2.shape[1], float(dW[0]))
    op_k = assemble_pullback_operator(domain, grid, t, coeffs)
    op_k1 = op_k if (domain.is_static and coeffs.autonomous) else assemble_pullback_operator(
        domain, grid, t + dt, coeffs)
    g_k = boundary_values(domain, grid, coeffs, t)
    g_k1 = boundary_values(domain, grid, coeffs, t + dt)
    idx = grid.interior_index
    Vi = _advance(op_k, op_k1, _factor(op_k1, dt, theta), V2[idx], g_k, g_k1, dt, dW, theta)
    out = np.empty_like(V2)
    out[idx] = Vi
    out[grid.boundary_index] = g_k1[:, None]
    return out[:, 0] if single else out


# ---------- ensemble field ----------
@dataclass(frozen=True, eq=False)
class FieldSample:
    values: np.ndarray  # (S, P)
    path_index: int


@dataclass(frozen=True, eq=False)
class EnsembleField:
    """u on the reference grid at stored time slices, one row per Brownian path."""

    values: np.ndarray  # (N, S, P)
    times: np.ndarray  # (S,)
    domain: MovingDomain
    grid: ReferenceGrid
    coeffs: Optional[SPDECoefficients] = None
    base_seed: Optional[int] = None
    time_grid: Optional[np.ndarray] = None
    theta: float = 0.5
    _cache: Dict[Tuple[str, int], np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def N(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_slices(self) -> int:
        return int(self.values.shape[1])

    @property
    def dim(self) -> int:
        return self.grid.dim

    def sample(self, p: int) -> FieldSample:
        return FieldSample(values=self.values[p], path_index=int(p))

    @property
    def samples(self) -> List[FieldSample]:
        return [self.sample(p) for p in range(self.N)]

    def slice_index(self, t: float, tol: float = 1e-9) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol * max(1.0, abs(t)):
            raise InvalidInputError(f"t = {t:g} is not a stored time slice.")
        return i

    def nearest_slice(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def _cached(self, key: str, i: int, make: Callable[[], np.ndarray]) -> np.ndarray:
        k = (key, int(i))
        if k not in self._cache:
            self._cache[k] = make()
        return self._cache[k]

    def physical_points(self, i: int) -> np.ndarray:
        return self._cached("x", i, lambda: self.domain.tau(self.times[i], self.grid.points))

    def det(self, i: int) -> np.ndarray:
        return self._cached("det", i, lambda: np.abs(self.domain.det_dtau(self.times[i], self.grid.points)))

    def quadrature_weights(self, i: int) -> np.ndarray:
        """Physical quadrature weights of G(t_i) at the grid nodes."""
        return self.grid.weights * self.det(i)

    def physical_spacing(self, i: int) -> np.ndarray:
        h = float(np.mean(self.grid.spacing))
        return h * self.det(i) ** (1.0 / self.dim)

    def ball_weights(self, i: int, x0, r: float) -> np.ndarray:
        """Quadrature weights of B_r(x0) cap G(t_i), half-cell inclusion at the rim."""
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        dist = np.linalg.norm(self.physical_points(i) - x0, axis=1)
        frac = np.clip((r - dist) / self.physical_spacing(i) + 0.5, 0.0, 1.0)
        return self.quadrature_weights(i) * frac

    def window(self, t_lo: float, t_hi: float) -> Tuple[np.ndarray, np.ndarray]:
        """Stored slices in [t_lo, t_hi] with trapezoid weights."""
        tol = 1e-12 * max(1.0, abs(t_hi))
        sel = np.flatnonzero((self.times >= t_lo - tol) & (self.times <= t_hi + tol))
        if sel.size == 0:
            raise InvalidInputError(f"No stored slice in [{t_lo:g}, {t_hi:g}].")
        if sel.size == 1:
            return sel, np.zeros(1)
        t = self.times[sel]
        w = np.zeros(sel.size)
        dt = np.diff(t)
        w[:-1] += 0.5 * dt
        w[1:] += 0.5 * dt
        return sel, w

    def mean(self) -> np.ndarray:
        return np.mean(self.values, axis=0)

    def second_moment(self) -> np.ndarray:
        return np.mean(self.values * self.values, axis=0)

    def jacobian(self, i: int) -> np.ndarray:
        return self._cached("J", i, lambda: self.domain.jacobians(self.times[i], self.grid.points)[0])

    def gradient(self, i: int) -> np.ndarray:
        """(N, P, n) physical gradient grad_x u = J^T grad_y v by central differences."""
        shape = self.grid.shape
        V = self.values[:, i, :].reshape((self.N,) + shape)
        parts = np.gradient(V, *self.grid.spacing, axis=tuple(range(1, self.dim + 1)))
        if self.dim == 1:
            parts = [parts]
        gy = np.stack([p.reshape(self.N, -1) for p in parts], axis=2)
        return np.einsum("pmk,mki->pmi", gy, self.jacobian(i))

    def interpolate(self, i: int, X) -> np.ndarray:
        """(N, m) values at physical points X through the reference grid."""
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        Y = self.domain.rho(self.times[i], X)
        vals = np.moveaxis(self.values[:, i, :].reshape((self.N,) + self.grid.shape), 0, -1)
        rgi = RegularGridInterpolator(self.grid.axes, vals, bounds_error=False, fill_value=None)
        return rgi(Y).T

    def compatible(self, other: "EnsembleField") -> bool:
        return (
            self.values.shape == other.values.shape
            and np.array_equal(self.times, other.times)
            and self.grid.shape == other.grid.shape
            and self.base_seed == other.base_seed
        )

    def difference(self, other: "EnsembleField") -> "EnsembleField":
        """u1 - u2 for coupled ensembles on the same domain family."""
        if not self.compatible(other):
            raise InvalidInputError("Ensembles differ in shape, times or seed.")
        if self.domain.describe() != other.domain.describe():
            raise InvalidInputError("difference needs both fields on the same domain family.")
        return EnsembleField(values=self.values - other.values, times=self.times, domain=self.domain,
                             grid=self.grid, coeffs=self.coeffs, base_seed=self.base_seed,
                             time_grid=self.time_grid, theta=self.theta)

    @classmethod
    def from_function(cls, domain: MovingDomain, grid: ReferenceGrid, times, func,
                      n_paths: int = 1) -> "EnsembleField":
        """Deterministic field u(t, x) sampled on the grid, replicated over paths."""
        times = np.asarray(times, dtype=float)
        vals = np.empty((times.size, grid.size))
        for i, t in enumerate(times):
            vals[i] = func(float(t), domain.tau(float(t), grid.points))
        return cls(values=np.broadcast_to(vals, (n_paths,) + vals.shape).copy(), times=times,
                   domain=domain, grid=grid)

    @classmethod
    def from_values(cls, domain: MovingDomain, grid: ReferenceGrid, times, values) -> "EnsembleField":
        values = np.asarray(values, dtype=float)
        if values.ndim == 2:
            values = values[None]
        return cls(values=values, times=np.asarray(times, dtype=float), domain=domain, grid=grid)


# ---------- solve ----------
def stored_steps(steps: int, stride: int) -> np.ndarray:
    if stride < 1:
        raise InvalidInputError("stride must be >= 1.")
    idx = list(range(0, steps + 1, stride))
    if idx[-1] != steps:
        idx.append(steps)
    return np.asarray(idx, dtype=int)


def solve(domain: MovingDomain, coeffs: SPDECoefficients, ensemble: Ensemble, grid: ReferenceGrid,
          theta: float = 0.5, stride: int = 1, workers: int = 1,
          check_condition: bool = True,
          progress: Optional[Callable[[int, int], None]] = None) -> EnsembleField:
    """
    March every path of the ensemble over ensemble.times. Paths are cut into
    fixed-size chunks, each chunk runs the whole time loop on its own, so the
    result does not depend on the worker count.
    """
    if not 0.0 <= theta <= 1.0:
        raise InvalidInputError("theta must be in [0, 1].")
    times = ensemble.times
    if times[-1] > domain.horizon * (1 + 1e-12):
        raise InvalidInputError("Time grid runs past the domain horizon.")
    if check_condition:
        coeffs.check_condition(domain, times[:: max(1, times.size // 16)], float(min(grid.spacing)))
    steps = ensemble.steps
    keep = stored_steps(steps, stride)
    slot = {int(k): j for j, k in enumerate(keep)}
    N = ensemble.N
    idx = grid.interior_index
    bidx = grid.boundary_index
    frozen = domain.is_static and coeffs.autonomous

    op_cache: Dict[int, PullbackOperator] = {}
    if frozen:
        op_cache[0] = assemble_pullback_operator(domain, grid, float(times[0]), coeffs)
    g_all = np.stack([boundary_values(domain, grid, coeffs, float(t)) for t in times])

    def op_at(k: int) -> PullbackOperator:
        if frozen:
            return op_cache[0]
        return assemble_pullback_operator(domain, grid, float(times[k]), coeffs)

    u_init = initial_values(domain, grid, coeffs)
    out = np.empty((N, keep.size, grid.size))

    def run_chunk(lo: int, hi: int) -> None:
        cols = hi - lo
        V = np.repeat(u_init[idx][:, None], cols, axis=1)
        out[lo:hi, 0, :] = u_init
        lu_cache: Dict[float, object] = {}
        op_k = op_at(0)
        for k in range(steps):
            dt = float(times[k + 1] - times[k])
            op_k1 = op_at(k + 1)
            if frozen:
                lu = lu_cache.get(dt)
                if lu is None:
                    lu = lu_cache[dt] = _factor(op_k1, dt, theta)
            else:
                lu = _factor(op_k1, dt, theta)
            V = _advance(op_k, op_k1, lu, V, g_all[k], g_all[k + 1], dt,
                         ensemble.increments[lo:hi, k], theta)
            j = slot.get(k + 1)
            if j is not None:
                out[lo:hi, j, idx] = V.T
                out[lo:hi, j, bidx] = g_all[k + 1]
            op_k = op_k1
        if progress is not None:
            try:
                progress(hi, N)
            except Exception:
                pass

    bounds = list(range(0, N, CHUNK_PATHS)) + [N]
    chunks = list(zip(bounds[:-1], bounds[1:]))
    workers = max(1, int(workers))
    logger.info("solve: %d paths, %d steps, grid %s, theta=%.2f, %d chunk(s) on %d worker(s)",
                N, steps, grid.describe(), theta, len(chunks), workers)
    if workers == 1 or len(chunks) == 1:
        for lo, hi in chunks:
            run_chunk(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for fut in [pool.submit(run_chunk, lo, hi) for lo, hi in chunks]:
                fut.result()
    return EnsembleField(values=out, times=times[keep].copy(), domain=domain, grid=grid,
                         coeffs=coeffs, base_seed=ensemble.base_seed, time_grid=times, theta=theta)


# ---------- heat kernel ----------
def heat_kernel(t, x, t0: float, y) -> np.ndarray:
    """K = (t0 - t)^{-n/2} exp(-|x - y|^2 / (4 (t0 - t))); K_t + lap_x K = 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t >= t0):
        raise DomainError("heat kernel needs t < t0.")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    X = np.asarray(x, dtype=float).reshape(-1, y.size)
    tau = t0 - t
    r2 = np.sum((X - y) ** 2, axis=1)
    return tau ** (-y.size / 2.0) * np.exp(-r2 / (4.0 * tau))


def heat_kernel_residual(t: float, x, t0: float, y, h: float, dt: float) -> np.ndarray:
    """K_t + lap K by central differences in t and x."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    X = np.asarray(x, dtype=float).reshape(-1, y.size)
    kt = (heat_kernel(t + dt, X, t0, y) - heat_kernel(t - dt, X, t0, y)) / (2 * dt)
    k0 = heat_kernel(t, X, t0, y)
    lap = np.zeros_like(k0)
    for i in range(y.size):
        e = np.zeros(y.size)
        e[i] = h
        lap += (heat_kernel(t, X + e, t0, y) - 2 * k0 + heat_kernel(t, X - e, t0, y)) / (h * h)
    return kt + lap


def _path_estimate(per_path: np.ndarray, name: str, params: Optional[dict] = None) -> Estimate:
    per_path = np.asarray(per_path, dtype=float)
    n = per_path.size
    se = float(np.std(per_path, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(value=float(np.mean(per_path)), stderr=se, name=name, params=dict(params or {}))


def weighted_mass_H(u: EnsembleField, i: int, t0: float, Y, x0, rho1: float,
                    rho2: float) -> List[Estimate]:
    """H(t_i; t0, y) = E int (eta u(t_i))^2 K(t_i, x; t0, y) dx for each y in Y."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    Yp = np.asarray(Y, dtype=float).reshape(-1, u.dim)
    X = u.physical_points(i)
    w = u.quadrature_weights(i) * spatial_cutoff(X, x0, rho1, rho2) ** 2
    K = np.stack([heat_kernel(u.times[i], X, t0, y) for y in Yp], axis=1)  # (P, ny)
    per_path = (u.values[:, i, :] ** 2 * w) @ K  # (N, ny)
    return [_path_estimate(per_path[:, j], "H", {"t": float(u.times[i]), "t0": t0, "y": Yp[j].tolist()})
            for j in range(Yp.shape[0])]


def weighted_mass_limit(u: EnsembleField, i: int, j: int, x0, rho1: float, rho2: float) -> float:
    """
    int_{B_rho1} H(t_i; t_j, y) dy / (2^n pi^{n/2} E int_{B_rho1} (eta u(t_j))^2);
    tends to 1 as t_i -> t_j.
    """
    if not u.times[i] < u.times[j]:
        raise DomainError("weighted_mass_limit needs t_i < t_j.")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    t0 = float(u.times[j])
    Xj = u.physical_points(j)
    wy = u.ball_weights(j, x0, rho1)
    sel = wy > 0
    Hs = weighted_mass_H(u, i, t0, Xj[sel], x0, rho1, rho2)
    num = float(np.sum(np.array([h.value for h in Hs]) * wy[sel]))
    eta = spatial_cutoff(Xj, x0, rho1, rho2)
    den_paths = (u.values[:, j, :] * eta) ** 2 @ wy
    den = (2.0 ** u.dim) * math.pi ** (u.dim / 2.0) * float(np.mean(den_paths))
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def _space_time_integral(per_slice: Callable[[int], np.ndarray], sel: np.ndarray,
                         tw: np.ndarray) -> np.ndarray:
    total = None
    for i, w in zip(sel, tw):
        if w == 0.0:
            continue
        v = per_slice(int(i)) * w
        total = v if total is None else total + v
    return total


def caccioppoli_check(u: EnsembleField, t0: float, x0, R: float, rho1: float,
                      rho2: float) -> CaccioppoliReport:
    """
    E int_{t0-R^2/2}^{t0} int_{B_{rho2~}} |grad u|^2 against
    [1/R^2 + 1/(rho2-rho1)^2] E int_{t0-R^2}^{t0} int_{B_rho2} u^2,
    rho2~ = (rho1 + 2 rho2) / 3; time windows clipped at 0.
    """
    if not (0 < rho1 < rho2) or not R > 0:
        raise InvalidInputError("Cylinders need 0 < rho1 < rho2 and R > 0.")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    rho2t = (rho1 + 2 * rho2) / 3.0
    sel_in, w_in = u.window(max(0.0, t0 - 0.5 * R * R), t0)
    sel_out, w_out = u.window(max(0.0, t0 - R * R), t0)

    def grad_slice(i):
        g = u.gradient(i)
        return np.sum(g * g, axis=2) @ u.ball_weights(i, x0, rho2t)

    def mass_slice(i):
        return (u.values[:, i, :] ** 2) @ u.ball_weights(i, x0, rho2)

    grad = _space_time_integral(grad_slice, sel_in, w_in)
    mass = _space_time_integral(mass_slice, sel_out, w_out)
    grad_v = float(np.mean(grad)) if grad is not None else 0.0
    mass_v = float(np.mean(mass)) if mass is not None else 0.0
    factor = 1.0 / R ** 2 + 1.0 / (rho2 - rho1) ** 2
    ratio = 0.0 if grad_v == 0.0 else (math.inf if mass_v == 0.0 else grad_v / (factor * mass_v))
    return CaccioppoliReport(grad_energy=grad_v, mass=mass_v, ratio=ratio)


# ---------- energy and continuity diagnostics ----------
def energy_decay_profile(u: EnsembleField, q2: Optional[float] = None) -> np.ndarray:
    """e^{-q2 t} E int u(t)^2 over the stored slices."""
    if q2 is None:
        q2 = u.coeffs.q2 if u.coeffs is not None else 1.0
    mass = np.array([float(np.mean(u.values[:, i, :] ** 2 @ u.quadrature_weights(i)))
                     for i in range(u.n_slices)])
    return np.exp(-q2 * u.times) * mass


def mean_square_increments(u: EnsembleField) -> float:
    """max_k E ||u(t_{k+1}) - u(t_k)||^2 over consecutive stored slices."""
    worst = 0.0
    for i in range(u.n_slices - 1):
        d = u.values[:, i + 1, :] - u.values[:, i, :]
        w = 0.5 * (u.quadrature_weights(i) + u.quadrature_weights(i + 1))
        worst = max(worst, float(np.mean(d * d @ w)))
    return worst
