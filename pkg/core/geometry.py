# core/geometry.py
# -*- coding: utf-8 -*-
"""
Set-distance calculus on sampled domains and the regularity checks that the
stability analysis assumes (interior balls, speed bound, Lipschitz cones).

Snapshot-only operations treat a set as its point cloud: a point belongs to
G "to tolerance" when its nearest sample is within `snapshot.tolerance`.
Family-level checks use the pulled-back signed distance instead.
"""

from __future__ import annotations

import logging
import math
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from core.motion import MovingDomain, _rows
from domain.errors import InvalidInputError, OutOfDomainError
from domain.models import DomainSnapshot

logger = logging.getLogger(__name__)


def _require_points(s: DomainSnapshot, what: str = "snapshot") -> np.ndarray:
    pts = s.all_points()
    if pts.shape[0] == 0:
        raise InvalidInputError(f"{what} has an empty point cloud.")
    return pts


def _directed(src: np.ndarray, dst: np.ndarray) -> float:
    dist, _ = cKDTree(dst).query(src, k=1)
    return float(np.max(dist))


def hausdorff_distance(A: DomainSnapshot, B: DomainSnapshot) -> float:
    a = _require_points(A, "first snapshot")
    b = _require_points(B, "second snapshot")
    return max(_directed(a, b), _directed(b, a))


def modified_distance(A: DomainSnapshot, B: DomainSnapshot) -> float:
    """max( sup_{x in dA} dist(x, cl B), sup_{x in dB} dist(x, cl A) )."""
    a = _require_points(A, "first snapshot")
    b = _require_points(B, "second snapshot")
    if A.boundary_points.shape[0] == 0 or B.boundary_points.shape[0] == 0:
        raise InvalidInputError("modified_distance needs boundary point clouds on both snapshots.")
    return max(_directed(A.boundary_points, b), _directed(B.boundary_points, a))


def interior_shrink(G: DomainSnapshot, delta: float) -> DomainSnapshot:
    """{x in G : B_delta(x) in G}, flagged empty when delta exceeds the inradius."""
    if delta < 0:
        raise InvalidInputError("delta must be nonnegative.")
    if delta == 0:
        return G
    if G.boundary_points.shape[0] == 0:
        raise InvalidInputError("interior_shrink needs a boundary point cloud.")
    tree = cKDTree(G.boundary_points)
    pts = G.interior_points
    dist, idx = tree.query(pts, k=1) if pts.shape[0] else (np.zeros(0), np.zeros(0, dtype=int))
    keep = dist >= delta
    kept = pts[keep]
    if kept.shape[0] == 0:
        logger.debug("interior_shrink: delta=%g empties the snapshot at t=%g", delta, G.time)
        dim = G.dim
        return DomainSnapshot(G.time, np.zeros((0, dim)), np.zeros((0, dim)), np.zeros((0, dim)),
                              G.spacing, flagged_empty=True)
    rim = keep & (dist < delta + G.spacing)
    rim_pts = pts[rim]
    toward = G.boundary_points[idx[rim]] - rim_pts
    normals = toward / np.maximum(np.linalg.norm(toward, axis=1), 1e-300)[:, None]
    inner = keep & ~rim
    return DomainSnapshot(G.time, pts[inner], rim_pts, normals, G.spacing)


def _ball_stencil(centers: np.ndarray, R: float, dim: int, n_dirs: int = 32) -> np.ndarray:
    """(m, s, n) stencil points covering the closed balls B_R(centers)."""
    if dim == 1:
        offsets = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])[:, None]
    elif dim == 2:
        theta = np.linspace(0.0, 2 * math.pi, n_dirs, endpoint=False)
        ring = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        offsets = np.vstack([ring, 0.5 * ring, np.zeros((1, 2))])
    else:
        rng = np.random.default_rng(0)
        dirs = rng.normal(size=(n_dirs * dim, dim))
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        offsets = np.vstack([dirs, 0.5 * dirs, np.zeros((1, dim))])
    return centers[:, None, :] + R * offsets[None, :, :]


def _cloud_members(points: np.ndarray, cloud: np.ndarray, tol: float) -> np.ndarray:
    shape = points.shape[:-1]
    dist, _ = cKDTree(cloud).query(points.reshape(-1, points.shape[-1]), k=1)
    return (dist <= tol).reshape(shape)


def _interior_ball_gaps(G: DomainSnapshot, R0: float) -> np.ndarray:
    """Per boundary sample: largest stencil distance of B_R0(x - R0 nu(x)) to the cloud."""
    if G.boundary_points.shape[0] == 0 or G.normals.shape != G.boundary_points.shape:
        raise InvalidInputError("check_interior_ball needs boundary points with normals.")
    if not R0 > 0:
        raise InvalidInputError("R0 must be positive.")
    centers = G.boundary_points - R0 * G.normals
    stencil = _ball_stencil(centers, R0, G.dim)
    m, s, n = stencil.shape
    dist, _ = cKDTree(G.all_points()).query(stencil.reshape(-1, n), k=1)
    return dist.reshape(m, s).max(axis=1)


def interior_ball_excess(G: DomainSnapshot, R0: float) -> float:
    """Largest stencil distance to G over all interior balls B_R0(x - R0 nu(x)); <= tol means pass."""
    return float(np.max(_interior_ball_gaps(G, R0)))


def interior_ball_failures(G: DomainSnapshot, R0: float) -> np.ndarray:
    """
    Boundary samples whose interior ball leaves G. On polygons these sit within
    R0 of a convex vertex; reentrant vertices admit interior balls of any size
    up to the local width.
    """
    return G.boundary_points[_interior_ball_gaps(G, R0) > G.tolerance]


def check_interior_ball(G: DomainSnapshot, R0: float) -> bool:
    return interior_ball_excess(G, R0) <= G.tolerance


def _family_ball_inside(family: MovingDomain, t: float, centers: np.ndarray, R: float,
                        tol: float) -> np.ndarray:
    stencil = _ball_stencil(centers, R, family.dim)
    m, s, n = stencil.shape
    return np.all(family.contains(t, stencil.reshape(-1, n), tol=tol).reshape(m, s), axis=1)


def _boundary_shift(family: MovingDomain, t_a: float, t_b: float, Yb: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(family.tau(t_b, Yb) - family.tau(t_a, Yb), axis=1)))


def _onset_times(family: MovingDomain, times: np.ndarray, R: float, Yb: np.ndarray) -> List[float]:
    """
    For each pair of consecutive grid times, the right end of a sub-interval of
    length <= R^2 / 2 that holds the largest boundary displacement, found by bisection.
    """
    out = []
    target = 0.5 * R * R
    for t_a, t_b in zip(times[:-1], times[1:]):
        a, b = float(t_a), float(t_b)
        if _boundary_shift(family, a, b, Yb) == 0.0:
            continue
        while b - a > target:
            mid = 0.5 * (a + b)
            if _boundary_shift(family, mid, b, Yb) >= _boundary_shift(family, a, mid, Yb):
                a = mid
            else:
                b = mid
        out.append(b)
    return out


def speed_bound_report(family: MovingDomain, E: float, times: Sequence[float], spacing: float,
                       radii: Optional[Sequence[float]] = None, stride: int = 1,
                       tol: Optional[float] = None, window_samples: int = 5) -> dict:
    """
    Samples (t0, x0, R) with B_{ER}(x0) in G(t0) and checks B_R(x0) in G(t) for
    t in [max(t0 - R^2, 0), t0]. Radii default to fractions of inradius / E so the
    larger ball can fit. `tested` counts the (t0, x0, R) triples that were checked;
    a report with nothing tested does not pass.
    """
    if E < 1:
        raise InvalidInputError("E must be >= 1.")
    times = np.unique(np.asarray(times, dtype=float))
    tol = 1e-9 if tol is None else float(tol)
    r_max = family.reference.inradius() / E
    if radii is None:
        radii = r_max * np.array([0.125, 0.25, 0.5, 1.0])
    ref_pts = family.reference.interior_sample(spacing)[::max(1, int(stride))]
    Yb = family.reference.boundary_sample(spacing)[0]
    tested = 0
    for R in (float(r) for r in radii):
        for t0 in np.unique(np.concatenate([times, _onset_times(family, times, R, Yb)])):
            X0 = family.tau(t0, ref_pts)
            ok_big = _family_ball_inside(family, t0, X0, E * R, tol)
            if not np.any(ok_big):
                continue
            centers = X0[ok_big]
            tested += centers.shape[0]
            for t in np.linspace(max(t0 - R * R, 0.0), t0, max(2, int(window_samples))):
                inside = _family_ball_inside(family, t, centers, R, tol)
                if not np.all(inside):
                    x0 = centers[~inside][0]
                    logger.debug("speed bound fails: E=%g R=%g t0=%g t=%g", E, R, t0, t)
                    return {"E": float(E), "passed": False, "tested": tested,
                            "failure": {"R": R, "t0": float(t0), "t": float(t), "x0": x0.tolist()}}
    if tested == 0:
        logger.warning("speed bound with E=%g is inconclusive: no ball B_ER fits in any G(t0)", E)
    return {"E": float(E), "passed": tested > 0, "tested": tested, "failure": None}


def check_speed_bound(family: MovingDomain, E: float, times: Sequence[float], spacing: float,
                      radii: Optional[Sequence[float]] = None, stride: int = 1,
                      tol: Optional[float] = None) -> bool:
    """
    For every sampled (t0, x0, R) with B_{ER}(x0) in G(t0), the cylinder
    (max{t0 - R^2, 0}, t0) x B_R(x0) must lie in the moving domain.
    False when no triple could be tested.
    """
    return bool(speed_bound_report(family, E, times, spacing, radii=radii, stride=stride,
                                   tol=tol)["passed"])


def minimal_speed_constant(family: MovingDomain, candidates: Iterable[float], times, spacing,
                           radii=None, stride: int = 1) -> Optional[float]:
    """First E in the (increasing) candidate list that passes check_speed_bound."""
    for E in candidates:
        if check_speed_bound(family, E, times, spacing, radii=radii, stride=stride):
            return float(E)
    return None


def _unit(zeta) -> np.ndarray:
    z = np.atleast_1d(np.asarray(zeta, dtype=float))
    nrm = float(np.linalg.norm(z))
    if nrm == 0.0 or not np.isfinite(nrm):
        raise InvalidInputError("Cone axis zeta must be a nonzero vector.")
    return z / nrm


def cone_membership(X, x0, zeta, rho0: float, alpha: float) -> np.ndarray:
    """x in B_rho0(x0) with (x - x0) . zeta / |x - x0| > cos(alpha)."""
    z = _unit(zeta)
    X = _rows(X, z.size)
    d = X - np.asarray(x0, dtype=float)
    r = np.linalg.norm(d, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosang = np.where(r > 0, (d @ z) / np.where(r > 0, r, 1.0), -np.inf)
    return (r < rho0) & (cosang > math.cos(alpha))


def lipschitz_cone(x0, zeta, rho0: float, alpha: float, spacing: Optional[float] = None) -> DomainSnapshot:
    """Point cloud of the truncated cone {x in B_rho0(x0) : angle(x - x0, zeta) < alpha}."""
    z = _unit(zeta)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if rho0 <= 0 or not (0 < alpha < math.pi):
        raise InvalidInputError("lipschitz_cone needs rho0 > 0 and alpha in (0, pi).")
    n = z.size
    h = float(spacing) if spacing else rho0 / 20.0
    axes = [np.arange(x0[k] - rho0, x0[k] + rho0 + 0.5 * h, h) for k in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)
    inside = grid[cone_membership(grid, x0, z, rho0, alpha)]
    if n == 1:
        bpts = np.vstack([x0, x0 + rho0 * z])
        bnrm = np.vstack([-z, z])
    else:
        if n != 2:
            raise InvalidInputError("lipschitz_cone boundary sampling supports n <= 2.")
        perp = np.array([-z[1], z[0]])
        count = max(4, int(math.ceil(2 * alpha * rho0 / h)))
        ang = np.linspace(-alpha, alpha, count)
        cap_dirs = np.outer(np.cos(ang), z) + np.outer(np.sin(ang), perp)
        radial = np.arange(0.5 * h, rho0, h)
        sides = []
        side_nrm = []
        for sgn in (1.0, -1.0):
            e = sgn * perp
            ray = math.cos(alpha) * z + math.sin(alpha) * e
            sides.append(x0 + np.outer(radial, ray))
            nrm = -math.sin(alpha) * z + math.cos(alpha) * e
            side_nrm.append(np.repeat(nrm[None, :], radial.size, axis=0))
        bpts = np.vstack([x0 + rho0 * cap_dirs] + sides)
        bnrm = np.vstack([cap_dirs] + side_nrm)
    return DomainSnapshot(time=0.0, interior_points=inside, boundary_points=bpts,
                          normals=bnrm, spacing=h)


def certify_lipschitz(G: DomainSnapshot, rho0: float, alpha: float, samples: int = 6) -> bool:
    """Every boundary sample admits the inward truncated cone (apex x, axis -nu) inside G."""
    if G.boundary_points.shape[0] == 0:
        raise InvalidInputError("certify_lipschitz needs boundary points with normals.")
    n = G.dim
    radial = np.linspace(0.0, rho0, samples + 1)[1:]
    pts = []
    for x, nu in zip(G.boundary_points, G.normals):
        axis = -nu
        if n == 1:
            pts.extend(x + r * axis for r in radial)
            continue
        perp = np.array([-axis[1], axis[0]])
        for ang in np.linspace(-alpha, alpha, 5):
            ray = math.cos(ang) * axis + math.sin(ang) * perp
            pts.extend(x + r * ray for r in radial)
    members = _cloud_members(np.asarray(pts), G.all_points(), G.tolerance)
    return bool(np.all(members))


def pullback_jacobians(family: MovingDomain, t: float, y, step: float = 1e-5,
                       tol: float = 1e-9) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(J, H, rho_t) of rho at tau(t, y); identity family gives (I, 0, 0)."""
    if not (-tol <= t <= family.horizon + tol):
        raise OutOfDomainError(f"t = {t:g} outside [0, {family.horizon:g}].")
    Y = _rows(y, family.dim)
    family.check_point(t, Y, tol)
    return family.jacobians(t, Y, step=step)


def distance_ratio_sweep(base: DomainSnapshot, perturbed: Sequence[DomainSnapshot],
                         d0: Optional[float] = None) -> List[Tuple[float, float, float]]:
    """(d, d_m, d / d_m) per perturbation; d <= C d_m is measured, never assumed."""
    out = []
    for snap in perturbed:
        d = hausdorff_distance(base, snap)
        dm = modified_distance(base, snap)
        if d0 is not None and d > d0:
            continue
        out.append((d, dm, d / dm if dm > 0 else (math.inf if d > 0 else 1.0)))
    return out
