# core/weights.py
# -*- coding: utf-8 -*-
"""
Carleman weight machinery: the sigma profile, the weight phi, its level sets
and bounds, and the smooth cutoffs built from the normalized bump.

sigma(s) = s * exp(-I(s)),  I(s) = int_0^s [1 - exp(-1/(ln t)^2)] dt / t.
With u = -1/ln t the integral becomes int_0^{u_s} (1 - e^{-u^2}) / u^2 du,
u_s = -1/ln s, which is regular at u = 0 and has the closed form
sqrt(pi) erf(u_s) - (1 - e^{-u_s^2}) / u_s.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.special import erf

from domain.errors import DomainError, InvalidInputError, PreconditionError
from domain.models import WeightBoundsReport

logger = logging.getLogger(__name__)

S_MAX = math.exp(-1.0)
_S_EPS = 1e-12


def _check_s(s) -> np.ndarray:
    arr = np.asarray(s, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr > S_MAX * (1 + _S_EPS)):
        raise DomainError("sigma is defined for s in (0, 1/e].")
    return np.minimum(arr, S_MAX)


def _u_of_s(s):
    return -1.0 / np.log(s)


def _integrand_u(u: float) -> float:
    if u == 0.0:
        return 1.0
    return -math.expm1(-u * u) / (u * u)


def exponent_closed_form(s) -> np.ndarray:
    """I(s) in closed form; used as the independent oracle for the quadrature."""
    u = _u_of_s(_check_s(s))
    return math.sqrt(math.pi) * erf(u) + np.expm1(-u * u) / u


def exponent_quad(s: float, epsabs: float = 1e-14, epsrel: float = 1e-13, limit: int = 200) -> float:
    """I(s) by adaptive quadrature of the regularized integrand."""
    us = float(_u_of_s(_check_s(s)))
    val, _ = integrate.quad(_integrand_u, 0.0, us, epsabs=epsabs, epsrel=epsrel, limit=limit)
    return val


def sigma(s: float) -> float:
    """sigma(s) for 0 < s <= 1/e by adaptive quadrature."""
    s = float(_check_s(s))
    return s * math.exp(-exponent_quad(s))


def sigma_prime(s):
    s = _check_s(s)
    return np.exp(-exponent_closed_form(s) - 1.0 / np.log(s) ** 2)


def sigma_second(s):
    s = _check_s(s)
    ln = np.log(s)
    return sigma_prime(s) * (np.expm1(-1.0 / ln ** 2) / s + 2.0 / (s * ln ** 3))


@dataclass(frozen=True, eq=False)
class SigmaTable:
    grid: np.ndarray
    values: np.ndarray
    derivative: np.ndarray
    second: np.ndarray
    c0: float
    _spline: CubicSpline = field(repr=False, default=None)

    def __call__(self, s) -> np.ndarray:
        s = _check_s(s)
        return s * np.exp(-self._spline(_u_of_s(s)))

    def log_sigma(self, s) -> np.ndarray:
        s = _check_s(s)
        return np.log(s) - self._spline(_u_of_s(s))

    def prime(self, s) -> np.ndarray:
        s = _check_s(s)
        return np.exp(-self._spline(_u_of_s(s)) - 1.0 / np.log(s) ** 2)

    @property
    def derivative_floor(self) -> float:
        """Lower bound of sigma' on (0, 1/e]: attained at s = 1/e."""
        return math.exp(-(self.c0 + 1.0))

    def ode_residual(self) -> np.ndarray:
        """d/ds ln(sigma / (s sigma')) - 2 / (s |ln s|^3) on the table grid."""
        s = self.grid
        lhs = self.derivative / self.values - 1.0 / s - self.second / self.derivative
        return lhs - 2.0 / (s * np.abs(np.log(s)) ** 3)

    def bounds_hold(self) -> bool:
        s = self.grid
        upper = np.all(self.values <= s * (1 + 1e-14))
        lower = np.all(self.values >= s * math.exp(-self.c0) * (1 - 1e-12))
        deriv = np.all(self.derivative <= 1.0) and np.all(self.derivative >= self.derivative_floor * (1 - 1e-12))
        return bool(upper and lower and deriv)


def compute_c0(table: Optional[SigmaTable] = None) -> float:
    """C0 = I(1/e), the tightest constant with sigma(s) >= s e^{-C0}."""
    if table is not None and table.grid[-1] < S_MAX * (1 - 1e-12):
        raise InvalidInputError("SigmaTable does not reach s = 1/e.")
    return exponent_quad(S_MAX)


def build_sigma_table(points: int = 1000, s_min: Optional[float] = None) -> SigmaTable:
    s_min = S_MAX / points if s_min is None else float(s_min)
    grid = np.linspace(s_min, S_MAX, points)
    expo = exponent_closed_form(grid)
    values = grid * np.exp(-expo)
    c0 = compute_c0()
    u = np.concatenate([[0.0], _u_of_s(grid)])
    spline = CubicSpline(u, np.concatenate([[0.0], expo]))
    table = SigmaTable(grid=grid, values=values, derivative=sigma_prime(grid),
                       second=sigma_second(grid), c0=c0, _spline=spline)
    logger.debug("sigma table: %d nodes, C0=%.12f", points, c0)
    return table


@lru_cache(maxsize=4)
def default_sigma_table(points: int = 1000) -> SigmaTable:
    return build_sigma_table(points)


def lambda_threshold(r1: float, R1: float) -> float:
    """Starting point for lambda sweeps: max{e (r1^2 + 4 R1^2) / 8, 1/2 + e/4}."""
    return max(math.e * (r1 * r1 + 4 * R1 * R1) / 8.0, 0.5 + math.e / 4.0)


# ---------- Carleman weights ----------
@dataclass(frozen=True, eq=False)
class CarlemanWeights:
    t0: float
    x0: np.ndarray
    a: float
    b: float
    lam: float
    sigma: SigmaTable

    def __post_init__(self):
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))
        if not self.a > 0:
            raise PreconditionError("time shift a must be positive", bound="a > 0")
        if not (0 < self.b <= self.t0):
            raise PreconditionError("lookback must satisfy 0 < b <= t0", bound="0 < b <= t0")
        if not self.lam >= 1:
            raise PreconditionError("lambda must be >= 1", bound="lambda >= 1")
        if self.a + self.b > S_MAX * (1 + _S_EPS):
            raise PreconditionError("a + b must not exceed 1/e", bound="a + b <= 1/e")

    @property
    def dim(self) -> int:
        return self.x0.size

    def shift(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t0 - self.b - 1e-12) or np.any(t > self.t0 + 1e-12):
            raise DomainError("t outside the window [t0 - b, t0].")
        return np.clip(self.t0 - t + self.a, self.a, self.a + self.b)

    def sigma_a(self, t):
        return self.sigma(self.shift(t))

    def _r2(self, x) -> np.ndarray:
        X = np.asarray(x, dtype=float).reshape(-1, self.dim)
        d = X - self.x0
        return np.sum(d * d, axis=1)

    def phi(self, t, x) -> np.ndarray:
        s = self.shift(t)
        return -self._r2(x) / (8.0 * s) - self.lam * self.sigma.log_sigma(s)

    def grad_phi(self, t, x) -> np.ndarray:
        s = self.shift(t)
        X = np.asarray(x, dtype=float).reshape(-1, self.dim)
        return -(X - self.x0) / (4.0 * np.reshape(s, (-1, 1)))

    def lap_phi(self, t, x) -> np.ndarray:
        s = self.shift(t)
        n_pts = np.asarray(x, dtype=float).reshape(-1, self.dim).shape[0]
        return np.broadcast_to(-self.dim / (4.0 * s), (n_pts,)).astype(float)

    def level_function(self, t, x) -> np.ndarray:
        s = self.shift(t)
        return self._r2(x) / (8.0 * self.lam * s) + np.log(s)


def phi(t, x, w: CarlemanWeights) -> np.ndarray:
    return w.phi(t, x)


def level_set_membership(t, x, rho_tilde: float, w: CarlemanWeights) -> np.ndarray:
    """(t, x) in D_{rho~, a}: |x-x0|^2 / (8 lam s) + ln s < ln(rho~^2 / (8 lam)), s = t0 - t + a."""
    if not rho_tilde > 0:
        raise InvalidInputError("rho_tilde must be positive.")
    return w.level_function(t, x) < math.log(rho_tilde ** 2 / (8.0 * w.lam))


def _level_sample(w: CarlemanWeights, rho_tilde: float, nt: int, nx: int):
    times = np.linspace(w.t0 - w.b, w.t0, nt)
    radius = 2.0 * rho_tilde
    axes = [np.linspace(c - radius, c + radius, nx) for c in w.x0]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=1)
    T = np.repeat(times, X.shape[0])
    XX = np.tile(X, (nt, 1))
    return T, XX


def weight_bounds_check(w: CarlemanWeights, rho_tilde: float, k: int, nt: int = 121,
                        nx: int = 81):
    """
    On D_{rho~,a}: e^phi >= (8 lam / rho~^2)^lam.
    On D_{2 rho~,a} \\ D_{rho~,a}: s^{-k} e^phi <= C^lam (lam / rho~^2)^{lam + k}; returns smallest C.
    """
    if k not in (0, 1, 2):
        raise InvalidInputError("k must be 0, 1 or 2.")
    T, X = _level_sample(w, rho_tilde, nt, nx)
    inner = level_set_membership(T, X, rho_tilde, w)
    outer = level_set_membership(T, X, 2 * rho_tilde, w)
    annulus = outer & ~inner
    if not np.any(inner) or not np.any(annulus):
        raise InvalidInputError("Level-set sample is empty; refine the grid or enlarge rho_tilde.")
    lam = w.lam
    log_floor = lam * math.log(8.0 * lam / rho_tilde ** 2)
    phi_in = w.phi(T[inner], X[inner])
    min_ratio = float(np.exp(np.min(phi_in) - log_floor))
    s = w.shift(T[annulus])
    expo = -k * np.log(s) + w.phi(T[annulus], X[annulus]) - (lam + k) * math.log(lam / rho_tilde ** 2)
    fitted = float(np.exp(np.max(expo) / lam))
    return WeightBoundsReport(k=k, min_ratio_inner=min_ratio, fitted_C=fitted,
                              n_inner=int(np.sum(inner)), n_annulus=int(np.sum(annulus)))


# ---------- mollifier ----------
def _bump(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = (z > 0.0) & (z < 1.0)
    zi = z[inside]
    out[inside] = np.exp(-1.0 / (zi * (1.0 - zi)))
    return out


def _bump_prime(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = (z > 0.0) & (z < 1.0)
    zi = z[inside]
    out[inside] = np.exp(-1.0 / (zi * (1.0 - zi))) * (1.0 - 2.0 * zi) / (zi * (1.0 - zi)) ** 2
    return out


@lru_cache(maxsize=1)
def _unit_profile(nodes: int = 2001) -> Tuple[float, PchipInterpolator]:
    """Normalization of the unit bump and the monotone table of P(z) = int_z^1 psi1 / Z."""
    norm, _ = integrate.quad(lambda z: float(_bump(np.array([z]))[0]), 0.0, 1.0, epsabs=1e-15, limit=200)
    z = np.linspace(0.0, 1.0, nodes)
    pieces = np.array([
        integrate.quad(lambda x: float(_bump(np.array([x]))[0]), a, b, epsabs=1e-16)[0]
        for a, b in zip(z[:-1], z[1:])
    ])
    tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]]) / norm
    tail[0] = 1.0
    return norm, PchipInterpolator(z, tail)


@dataclass(frozen=True)
class Mollifier:
    d1: float
    d2: float

    def __post_init__(self):
        if not self.d1 < self.d2:
            raise InvalidInputError("Mollifier needs d1 < d2.")

    @property
    def width(self) -> float:
        return self.d2 - self.d1

    @property
    def normalization(self) -> float:
        """int_{d1}^{d2} psi1 in tau units."""
        return _unit_profile()[0] * self.width

    def evaluate(self, tau):
        """(psi2, psi2', psi2'') at tau."""
        tau = np.asarray(tau, dtype=float)
        norm, prof = _unit_profile()
        z = (tau - self.d1) / self.width
        zc = np.clip(z, 0.0, 1.0)
        value = np.where(z <= 0.0, 1.0, np.where(z >= 1.0, 0.0, prof(zc)))
        d1v = -_bump(z) / (norm * self.width)
        d2v = -_bump_prime(z) / (norm * self.width ** 2)
        return value, d1v, d2v


def mollifier_psi2(tau, m: Mollifier):
    return m.evaluate(tau)


@dataclass(frozen=True, eq=False)
class CutoffValue:
    value: np.ndarray
    grad: np.ndarray
    dt: np.ndarray
    laplacian: np.ndarray


def cutoff_levels(w: CarlemanWeights, R1: float) -> Mollifier:
    return Mollifier(math.log((R1 / 2.0) ** 2 / (8.0 * w.lam)), math.log(R1 ** 2 / (8.0 * w.lam)))


def space_time_cutoff(t, x, w: CarlemanWeights, R1: float) -> CutoffValue:
    """psi2(|x-x0|^2 / (8 lam s) + ln s): 1 on D_{R1/2,a}, 0 outside D_{R1,a}."""
    if not R1 > 0:
        raise InvalidInputError("R1 must be positive.")
    moll = cutoff_levels(w, R1)
    s = w.shift(t)
    X = np.asarray(x, dtype=float).reshape(-1, w.dim)
    d = X - w.x0
    r2 = np.sum(d * d, axis=1)
    lam = w.lam
    tau = r2 / (8.0 * lam * s) + np.log(s)
    val, p1, p2 = moll.evaluate(tau)
    s_col = np.reshape(s, (-1, 1)) if np.ndim(s) else s
    grad_tau = d / (4.0 * lam * s_col)
    grad = p1[:, None] * grad_tau
    # d tau / dt = -d tau / ds
    dtau_dt = r2 / (8.0 * lam * s ** 2) - 1.0 / s
    lap = p2 * np.sum(grad_tau ** 2, axis=1) + p1 * w.dim / (4.0 * lam * s)
    return CutoffValue(value=val, grad=grad, dt=p1 * dtau_dt, laplacian=lap)


def spatial_cutoff(x, x0, rho1: float, rho2: float) -> np.ndarray:
    """Radial cutoff: 1 on B_{(2 rho1 + rho2)/3}(x0), 0 outside B_{(rho1 + 2 rho2)/3}(x0)."""
    if not 0 < rho1 < rho2:
        raise InvalidInputError("spatial_cutoff needs 0 < rho1 < rho2.")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    X = np.asarray(x, dtype=float).reshape(-1, x0.size)
    r = np.linalg.norm(X - x0, axis=1)
    m = Mollifier((2 * rho1 + rho2) / 3.0, (rho1 + 2 * rho2) / 3.0)
    return m.evaluate(r)[0]
