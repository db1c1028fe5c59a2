# core/verify.py
# -*- coding: utf-8 -*-
"""
Numerical checks of the weighted estimate, the two-sphere one-cylinder
inequality, the strong unique continuation decay, the iteration lemma and
the cone-chain propagation of smallness.

The inequalities carry unspecified constants; each check fits the smallest
constant on a training sweep and re-verifies it on held-out data.
"""

from __future__ import annotations

import logging
import math
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from core.functionals import ball_mass, cylinder_energy, estimate_from_paths, sphere_mass
from core.manufactured import ManufacturedSolution, boundary_trace
from core.solver import EnsembleField, build_reference_grid
from core.stochastic import generate_paths
from core.weights import CarlemanWeights
from domain.errors import (
    GeometryError,
    InsufficientDataError,
    InvalidInputError,
    PreconditionError,
)
from domain.models import (
    CarlemanResidualReport,
    ConeChain,
    GeometryParams,
    IterationState,
    SmallPropagationReport,
    SucpReport,
    TwoSphereFit,
    TwoSphereParams,
    TwoSphereReport,
    TwoSphereValidation,
)

logger = logging.getLogger(__name__)

NESTING_RTOL = 1e-12


# ---------- weighted estimate residual ----------
def carleman_time_grid(w: CarlemanWeights, nt: int) -> np.ndarray:
    """Times in [t0 - b, t0], geometric in s = t0 - t + a."""
    if nt < 3:
        raise InvalidInputError("nt must be >= 3.")
    s = w.a * ((w.a + w.b) / w.a) ** np.linspace(0.0, 1.0, nt)
    t = np.sort(w.t0 + w.a - s)
    t[0] = w.t0 - w.b
    t[-1] = w.t0
    return t


def _trapezoid_weights(t: np.ndarray) -> np.ndarray:
    w = np.zeros(t.size)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def _brownian_values(times: np.ndarray, n_paths: int, seed: int) -> np.ndarray:
    """(n_paths, len(times)) W(t) sampled on a grid starting after 0."""
    grid = times if times[0] == 0.0 else np.concatenate([[0.0], times])
    W = generate_paths(seed, n_paths, grid).values()
    return W if times[0] == 0.0 else W[:, 1:]


def carleman_residual(m: ManufacturedSolution, w: CarlemanWeights, cells: int = 256, nt: int = 129,
                      n_paths: int = 200, seed: int = 0,
                      trace_tol: float = 1e-8) -> CarlemanResidualReport:
    """
    Every integral of the weighted estimate by grid quadrature. Each term is
    multiplied by sigma(a)^{2 lam} so that e^{2 phi} stays bounded; the sign
    of the margin rhs - lhs is unaffected.
    """
    dom = m.domain
    n = dom.dim
    if w.dim != n:
        raise InvalidInputError("Focal point dimension does not match the domain.")
    if w.t0 > dom.horizon * (1 + 1e-12):
        raise PreconditionError("t0 exceeds the horizon", bound="t0 <= T")
    times = carleman_time_grid(w, nt)
    tw = _trapezoid_weights(times)
    if m.stochastic:
        W = _brownian_values(times, n_paths, seed)
    else:
        W = np.zeros((1, times.size))
    P = W.shape[0]
    grid = build_reference_grid(dom.reference, cells)
    mid = times.size // 2
    scale = max(1.0, float(np.max(np.abs(m.u(float(times[mid]), dom.tau(float(times[mid]), grid.points),
                                               W[:, mid])))))
    for j in (0, mid, times.size - 1):
        if boundary_trace(m, float(times[j]), W[:, j]) > trace_tol * scale:
            raise PreconditionError("u must vanish on the lateral boundary", bound="u = 0 on boundary")

    spacing = float(min(grid.spacing))
    c0 = w.sigma.c0
    lam = w.lam
    log_sa = float(w.sigma.log_sigma(w.a))
    log_scale = -2.0 * lam * log_sa

    def e2phi(t, X):
        s = float(w.shift(t))
        r2 = np.sum((X - w.x0) ** 2, axis=1)
        return np.exp(-r2 / (4.0 * s) - 2.0 * lam * (float(w.sigma.log_sigma(s)) - log_sa))

    lhs_u = np.zeros(P)
    lhs_g = np.zeros(P)
    rhs = np.zeros(P)
    N1 = np.zeros(P)
    N2 = np.zeros(P)
    M4 = np.zeros(P)
    for j, t in enumerate(times):
        t = float(t)
        s = float(w.shift(t))
        X = dom.tau(t, grid.points)
        q = grid.weights * np.abs(dom.det_dtau(t, grid.points))
        e2 = e2phi(t, X) * q
        U = m.u(t, X, W[:, j])
        G = m.grad_u(t, X, W[:, j])
        g1 = m.g1(t, X, W[:, j])
        g2 = m.g2(t, X, W[:, j])
        dg2 = m.grad_g2(t, X, W[:, j])
        ln3 = abs(math.log(s)) ** 3
        sig = float(w.sigma(s))
        lhs_u += tw[j] * lam * math.exp(-c0) / ln3 * (U * U) @ e2
        lhs_g += tw[j] * 0.5 * math.exp(-2 * c0) * sig / ln3 * np.sum(G * G, axis=2) @ e2
        rhs += tw[j] * math.exp(2 * c0) * sig * sig * (g1 * g1) @ e2
        N1 += tw[j] * (0.5 + n / 4.0) * s * (g2 * g2) @ e2
        N2 += tw[j] * s * s * np.sum(dg2 * dg2, axis=2) @ e2
        Xb, nu, wb = dom.boundary_quadrature(t, spacing)
        eb = e2phi(t, Xb)
        Gb = m.grad_u(t, Xb, W[:, j])
        g2b = m.g2(t, Xb, W[:, j])
        flux = np.sum((Xb - w.x0) * nu, axis=1) * wb * eb
        M4 -= tw[j] * (np.sum(Gb * Gb, axis=2) + 0.25 * s * g2b * g2b) @ flux

    t_start, t_end = float(times[0]), float(times[-1])
    X0 = dom.tau(t_start, grid.points)
    q0 = grid.weights * np.abs(dom.det_dtau(t_start, grid.points))
    U0 = m.u(t_start, X0, W[:, 0])
    G0 = m.grad_u(t_start, X0, W[:, 0])
    grad_phi0 = w.grad_phi(t_start, X0)
    gv = G0 + U0[..., None] * grad_phi0[None]
    M1 = (w.a + w.b) ** 2 * np.sum(gv * gv, axis=2) @ (e2phi(t_start, X0) * q0)
    r2_0 = np.sum((X0 - w.x0) ** 2, axis=1)
    ratio = math.exp(2.0 * lam * (log_sa - float(w.sigma.log_sigma(w.a + w.b))))
    M3 = ((r2_0 / 16.0 + 0.5 * (w.a + w.b)) * ratio * q0) @ (U0 * U0).T
    X1 = dom.tau(t_end, grid.points)
    q1 = grid.weights * np.abs(dom.det_dtau(t_end, grid.points))
    U1 = m.u(t_end, X1, W[:, -1])
    M2 = w.a * lam * math.exp(c0) * (U1 * U1) @ q1

    margin_paths = rhs + M1 + M2 + M3 + M4 + N1 + N2 - lhs_u - lhs_g
    margin = estimate_from_paths(margin_paths, "margin")
    report = CarlemanResidualReport(
        name=m.name, lam=float(lam), a=float(w.a), b=float(w.b),
        lhs_u=float(np.mean(lhs_u)), lhs_grad=float(np.mean(lhs_g)), rhs_source=float(np.mean(rhs)),
        M=(float(np.mean(M1)), float(np.mean(M2)), float(np.mean(M3)), float(np.mean(M4))),
        N=(float(np.mean(N1)), float(np.mean(N2))),
        margin=margin.value, margin_stderr=margin.stderr, log_scale=log_scale,
    )
    logger.debug("carleman %s lam=%g: margin=%.4e +- %.1e", m.name, lam, margin.value, margin.stderr)
    return report


def margin_ok(report: CarlemanResidualReport, nsigma: float = 3.0, atol: float = 1e-12) -> bool:
    scale = max(report.lhs, report.rhs, 1.0)
    return report.margin >= -(nsigma * report.margin_stderr + atol * scale)


# ---------- two-sphere one-cylinder ----------
def check_two_sphere_params(p: TwoSphereParams, R0: Optional[float] = None) -> None:
    if not (0 < p.r <= p.rho <= p.eta1 * p.R):
        raise PreconditionError("radii must satisfy 0 < r <= rho <= eta1 R", bound="r <= rho <= eta1 R")
    if p.R <= p.r:
        raise PreconditionError("R must exceed r", bound="R > r")
    if p.rho >= 1.0:
        raise PreconditionError("rho must be below 1", bound="rho < 1")
    if p.regime == "boundary":
        cap = min(math.sqrt(p.t0), 1.0 / math.sqrt(2 * math.e), R0 if R0 is not None else math.inf)
        if p.R > cap:
            raise PreconditionError(f"R = {p.R:g} exceeds min(sqrt t0, R0, 1/sqrt(2e)) = {cap:g}",
                                    bound="R <= min(sqrt t0, R0, 1/sqrt(2e))")


def two_sphere_report(u: EnsembleField, p: TwoSphereParams, R0: Optional[float] = None) -> TwoSphereReport:
    """eps1 on B_r, the cylinder energy on B_R and the middle-ball mass on B_rho at t0."""
    check_two_sphere_params(p, R0)
    variant = "E2" if p.regime == "zero_initial" else "E1"
    eps1 = sphere_mass(u, p.t0, p.x0, p.r)
    lhs = sphere_mass(u, p.t0, p.x0, p.rho)
    energy = cylinder_energy(u, p.t0, p.x0, p.R, clipped=(variant == "E2"))
    return TwoSphereReport(params=p, eps1=eps1, energy=energy, lhs=lhs, variant=variant)


def _log_bound_unit(rep: TwoSphereReport, C_exp: float, eps1: float, energy: float) -> float:
    """log of (R / rho) |ln rho|^{3/2} E^{1-theta} eps1^theta."""
    p = rep.params
    th = min(1.0, 1.0 / (C_exp * (math.log(p.R) - math.log(p.r))))
    with np.errstate(divide="ignore"):
        le = float(np.log(energy))
        lx = float(np.log(eps1))
    return (math.log(p.R / p.rho) + 1.5 * math.log(abs(math.log(p.rho)))
            + (1.0 - th) * le + th * lx)


def two_sphere_bound(rep: TwoSphereReport, C_mult: float, C_exp: float,
                     eps1: Optional[float] = None, energy: Optional[float] = None) -> float:
    e1 = rep.eps1.value if eps1 is None else eps1
    en = rep.energy.value if energy is None else energy
    return C_mult * math.exp(_log_bound_unit(rep, C_exp, e1, en))


def two_sphere_fit(reports: Sequence[TwoSphereReport],
                   C_exp_grid: Optional[Sequence[float]] = None) -> TwoSphereFit:
    """
    Smallest C_mult for each C_exp on the grid; the pair minimizing
    log C_mult + log C_exp is returned. Trivial reports (0 <= 0) are excluded.
    """
    used = [r for r in reports if not r.trivial and r.energy.value > 0 and r.lhs.value > 0]
    excluded = len(reports) - len(used)
    if len(used) < 3:
        raise InsufficientDataError(f"two_sphere_fit needs >= 3 nontrivial reports, got {len(used)}.")
    grid = np.geomspace(1.0, 100.0, 81) if C_exp_grid is None else np.asarray(C_exp_grid, dtype=float)
    if np.any(grid < 1.0):
        raise InvalidInputError("C_exp candidates must be >= 1.")
    best: Optional[Tuple[float, float, float]] = None
    for ce in grid:
        need = [math.log(r.lhs.value) - _log_bound_unit(r, ce, r.eps1.value, r.energy.value) for r in used]
        log_cm = max(need)
        if not math.isfinite(log_cm):
            continue
        score = log_cm + math.log(ce)
        if best is None or score < best[0]:
            best = (score, math.exp(log_cm), float(ce))
    if best is None:
        raise InsufficientDataError("No finite constant fits the sweep.")
    _, cm, ce = best
    slacks = tuple(math.log(two_sphere_bound(r, cm, ce)) - math.log(r.lhs.value) for r in used)
    logger.info("two-sphere fit: C_mult=%.4g C_exp=%.4g over %d reports (%d excluded)",
                cm, ce, len(used), excluded)
    return TwoSphereFit(C_mult=cm, C_exp=ce, slacks=slacks, n_used=len(used), n_excluded=excluded)


def two_sphere_validate(fit: TwoSphereFit, holdout: Sequence[TwoSphereReport],
                        nsigma: float = 3.0) -> TwoSphereValidation:
    """Re-check the fitted inequality with every estimate moved by nsigma in its favour."""
    violations = []
    checked = 0
    for i, r in enumerate(holdout):
        if r.trivial:
            continue
        checked += 1
        lhs_low = max(0.0, r.lhs.value - nsigma * r.lhs.stderr)
        bound = two_sphere_bound(r, fit.C_mult, fit.C_exp,
                                 eps1=r.eps1.value + nsigma * r.eps1.stderr,
                                 energy=r.energy.value + nsigma * r.energy.stderr)
        if lhs_low > bound * (1 + 1e-12):
            violations.append(i)
    return TwoSphereValidation(n_checked=checked, violations=tuple(violations))


# ---------- strong unique continuation ----------
def _sphere_points(x0: np.ndarray, r: float, n_dirs: int = 32) -> np.ndarray:
    if x0.size == 1:
        return np.array([[x0[0] - r], [x0[0] + r]])
    phi = np.linspace(0.0, 2 * math.pi, n_dirs, endpoint=False)
    ring = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    if x0.size == 2:
        return x0 + r * ring
    pts = [x0 + r * np.eye(x0.size)[k] * sgn for k in range(x0.size) for sgn in (-1, 1)]
    return np.array(pts)


def sucp_probe(u: EnsembleField, t0: float, x0, radii: Sequence[float],
               nsigma: float = 3.0) -> SucpReport:
    """
    Fit log E int_{B_r} u(t0)^2 against log r. A slope of n + 2k means
    vanishing of order k at x0; masses within nsigma of zero are dropped.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    radii = [float(r) for r in radii]
    if len(radii) < 2 or any(r <= 0 for r in radii) or any(b >= a for a, b in zip(radii, radii[1:])):
        raise InvalidInputError("radii must be a strictly decreasing list of positive values.")
    for r in radii:
        if np.any(u.domain.sdf(t0, _sphere_points(x0, r)) >= 0):
            raise InvalidInputError(f"B_{r:g}(x0) is not inside G(t0).")
    ests = [ball_mass(u, t0, x0, r) for r in radii]
    masses = np.array([e.value for e in ests])
    ses = np.array([e.stderr for e in ests])
    keep = (masses > 0) & (masses > nsigma * ses)
    n = u.dim
    nan = float("nan")
    if np.count_nonzero(keep) < 2:
        return SucpReport(tuple(radii), tuple(masses.tolist()), tuple(ses.tolist()), nan, nan, nan,
                          (), inconclusive=True, finite_order=False)
    lr = np.log(np.asarray(radii)[keep])
    lm = np.log(masses[keep])
    fit = stats.linregress(lr, lm)
    local = tuple((np.diff(lm) / np.diff(lr)).tolist())
    slope = float(fit.slope)
    return SucpReport(
        radii=tuple(radii), masses=tuple(masses.tolist()), stderrs=tuple(ses.tolist()),
        slope=slope, slope_stderr=float(fit.stderr), vanishing_order=(slope - n) / 2.0,
        local_slopes=local, inconclusive=False, finite_order=bool(np.isfinite(slope)),
    )


# ---------- iteration lemma ----------
def _check_iteration(st: IterationState) -> None:
    if not st.C1 > 1:
        raise InvalidInputError("C1 must exceed 1.")
    if not 0 < st.s < 1:
        raise InvalidInputError("s must lie in (0, 1).")
    if not st.x1 > 0:
        raise InvalidInputError("x1 must be positive.")
    if st.n < 1:
        raise InvalidInputError("n must be >= 1.")


def geometric_iteration_bound(st: IterationState) -> float:
    """C1^{1/(1-s)} x1^{s^{n-1}}."""
    _check_iteration(st)
    return math.exp(math.log(st.C1) / (1.0 - st.s) + st.s ** (st.n - 1) * math.log(st.x1))


def unrolled_recursion(st: IterationState) -> float:
    """x_n from x_k = C1 x_{k-1}^s with equality."""
    _check_iteration(st)
    x = st.x1
    for _ in range(st.n - 1):
        x = st.C1 * x ** st.s
    return x


def iteration_bound_dominates(st: IterationState) -> bool:
    """
    Exact check. The unrolled value is C1^{sum_{j<n-1} s^j} x1^{s^{n-1}}, so
    domination over the bound reduces to 1/(1-s) >= sum_{j<n-1} s^j in
    rational arithmetic on the binary value of s.
    """
    _check_iteration(st)
    s = Fraction(st.s)
    partial = (1 - s ** (st.n - 1)) / (1 - s)
    return Fraction(1) / (1 - s) >= partial


# ---------- cone chain ----------
def _unit(zeta) -> np.ndarray:
    z = np.atleast_1d(np.asarray(zeta, dtype=float))
    nz = float(np.linalg.norm(z))
    if nz == 0:
        raise InvalidInputError("Cone axis must be nonzero.")
    return z / nz


def cone_chain_build(x0, zeta, g: GeometryParams, sigma_tilde: float) -> ConeChain:
    """Balls B_{rho_k}(w_k) down the cone axis until mu_k - rho_k < sigma_tilde."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    zeta = _unit(zeta)
    sa = math.sin(g.alpha)
    mu1 = g.rho0 / (1.0 + sa)
    z = g.eta1 * sa / (4.0 * g.E)
    a = (1.0 - z) / (1.0 + z)
    rho1 = z * mu1
    if not 0 < sigma_tilde < mu1 - rho1:
        raise InvalidInputError(
            f"sigma_tilde must lie in (0, mu1 - rho1) = (0, {mu1 - rho1:.6g})."
        )
    L = (math.log(sigma_tilde) - math.log(mu1 - rho1)) / math.log(a)
    k_bar = int(math.floor(L)) + 2
    k = np.arange(k_bar)
    mu = mu1 * a ** k
    rho = rho1 * a ** k
    centers = x0 + mu[:, None] * zeta
    return ConeChain(x0=x0, zeta=zeta, mu=mu, centers=centers, rho=rho, cone_ratio=a, k_bar=k_bar,
                     bracket=(L + 1.0, L + 2.0), sigma_tilde=float(sigma_tilde), rho0=g.rho0,
                     alpha=g.alpha)


def ball_in_cone(center, r: float, x0, zeta, rho0: float, alpha: float, rtol: float = NESTING_RTOL) -> bool:
    """Closed ball inside the truncated cone {|x - x0| < rho0, angle to zeta < alpha}."""
    c = np.atleast_1d(np.asarray(center, dtype=float)) - np.atleast_1d(x0)
    zeta = _unit(zeta)
    d = float(c @ zeta)
    q = float(np.linalg.norm(c - d * zeta))
    slack = rtol * max(rho0, 1.0)
    return (r <= d * math.sin(alpha) - q * math.cos(alpha) + slack
            and float(np.linalg.norm(c)) + r <= rho0 + slack)


def chain_nesting_holds(chain: ConeChain, g: GeometryParams, rtol: float = NESTING_RTOL) -> bool:
    """B_{rho_{k+1}}(w_{k+1}) in B_{3 rho_k}(w_k) and B_{4 E rho_k / eta1}(w_k) in the cone."""
    for k in range(chain.k_bar):
        if not ball_in_cone(chain.centers[k], 4.0 * g.E * chain.rho[k] / g.eta1, chain.x0, chain.zeta,
                            chain.rho0, chain.alpha, rtol):
            return False
        if k + 1 < chain.k_bar:
            gap = float(np.linalg.norm(chain.centers[k + 1] - chain.centers[k])) + chain.rho[k + 1]
            if gap > 3.0 * chain.rho[k] * (1 + rtol):
                return False
    return True


def k_bar_in_bracket(chain: ConeChain) -> bool:
    lo, hi = chain.bracket
    return lo - 1e-9 <= chain.k_bar <= hi + 1e-9


def _fit_recursion(masses: np.ndarray, k_bar: int) -> Tuple[float, float, float]:
    """(C1, s, C1^{1/(1-s)} m1^{s^{k_bar-1}}) minimizing the iterated bound over s."""
    best = None
    for s in np.linspace(0.05, 0.95, 19):
        if masses.size > 1:
            ratios = masses[1:] / np.maximum(masses[:-1], 1e-300) ** s
            C1 = max(1.0 + 1e-9, float(np.max(ratios)))
        else:
            C1 = 1.0 + 1e-9
        bound = geometric_iteration_bound(IterationState(float(masses[0]), C1, float(s), k_bar))
        if best is None or bound < best[2]:
            best = (C1, float(s), bound)
    return best


def small_propagation_check(u: EnsembleField, chain: ConeChain, kappa0: float, t0: Optional[float] = None,
                            nsigma: float = 3.0) -> SmallPropagationReport:
    """
    Iterate the empirical two-sphere inequality down the chain and bound
    E|u(t0, x0)|^2 by iterated / |B_{rho_kbar}| + 2 kappa0^2 rho_kbar^2.
    Accepts a difference field u1 - u2 as well.
    """
    if kappa0 < math.e:
        raise InvalidInputError("kappa0 must be >= e.")
    t0 = float(u.times[-1]) if t0 is None else float(t0)
    for c, r in zip(chain.centers, chain.rho):
        if np.any(u.domain.sdf(t0, _sphere_points(c, r)) >= 0):
            raise GeometryError("Cone chain leaves the domain.")
    masses = np.array([ball_mass(u, t0, c, r).value for c, r in zip(chain.centers, chain.rho)])
    sigma_local = float(masses[0])
    pt = estimate_from_paths(u.interpolate(u.slice_index(t0), chain.x0[None, :])[:, 0] ** 2, "u(x0)^2")
    if sigma_local >= 1.0:
        raise PreconditionError("local mass must lie in (0, 1)", bound="sigma < 1")
    if sigma_local == 0.0:
        return SmallPropagationReport(sigma_local=0.0, masses=tuple(masses.tolist()), C1=1.0, s=0.5,
                                      iterated_bound=0.0, pointwise_bound=0.0, measured=pt.value,
                                      measured_stderr=pt.stderr, consistent=pt.value == 0.0,
                                      informative=False)
    C1, s, iterated = _fit_recursion(masses, chain.k_bar)
    r_last = float(chain.rho[-1])
    vol = math.pi ** (u.dim / 2.0) / math.gamma(u.dim / 2.0 + 1.0) * r_last ** u.dim
    pointwise = iterated / vol + 2.0 * kappa0 ** 2 * r_last ** 2
    consistent = pt.value - nsigma * pt.stderr <= pointwise
    informative = abs(math.log(sigma_local)) > 1.0
    return SmallPropagationReport(sigma_local=sigma_local, masses=tuple(masses.tolist()), C1=C1, s=s,
                                  iterated_bound=iterated, pointwise_bound=pointwise, measured=pt.value,
                                  measured_stderr=pt.stderr, consistent=bool(consistent),
                                  informative=bool(informative))


def log_law_bound(C: float, kappa0: float, sigma: float, alpha: float) -> float:
    """C kappa0^C |ln sigma|^{-alpha / C}."""
    return C * kappa0 ** C * abs(math.log(sigma)) ** (-alpha / C)


def fit_log_law(sigmas: Sequence[float], measured: Sequence[float], kappa0: float, alpha: float,
                C_max: float = 1e3, iters: int = 80) -> float:
    """Smallest C >= 1 (by bisection) with measured <= C kappa0^C |ln sigma|^{-alpha/C} at every point."""
    pairs = [(float(s), float(m)) for s, m in zip(sigmas, measured)]
    if not pairs:
        raise InsufficientDataError("fit_log_law needs at least one point.")
    if any(not 0 < s < 1 for s, _ in pairs):
        raise InvalidInputError("sigma values must lie in (0, 1).")

    def ok(C: float) -> bool:
        return all(m <= log_law_bound(C, kappa0, s, alpha) for s, m in pairs)

    if ok(1.0):
        return 1.0
    hi = 2.0
    while not ok(hi):
        hi *= 2.0
        if hi > C_max:
            return math.inf
    lo = hi / 2.0 if hi > 2.0 else 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi
