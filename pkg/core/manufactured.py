# core/manufactured.py
# -*- coding: utf-8 -*-
"""
Closed-form solutions of du - lap u dt = g1 dt + g2 dW vanishing on the
lateral boundary, used as oracles for the weighted-estimate residual and
for solver order checks.

Every field takes (t, X, W) where W holds the Brownian value W(t) per path
and returns an (N, m) array; deterministic members ignore W.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from core.motion import EndpointLaw, IdentityLaw, IntervalDomain, MovingDomain
from domain.errors import InvalidInputError

Field = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


def _paths(W) -> np.ndarray:
    return np.atleast_1d(np.asarray(W, dtype=float))


def _x(X) -> np.ndarray:
    return np.asarray(X, dtype=float).reshape(-1, 1)[:, 0]


@dataclass(frozen=True, eq=False)
class ManufacturedSolution:
    name: str
    domain: MovingDomain
    u: Field
    grad_u: Callable[[float, np.ndarray, np.ndarray], np.ndarray]  # (N, m, n)
    g1: Field
    g2: Field
    grad_g2: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    stochastic: bool = False

    def values(self, t: float, X, W=0.0) -> np.ndarray:
        return self.u(t, X, _paths(W))


def _broadcast(vals: np.ndarray, W: np.ndarray) -> np.ndarray:
    return np.broadcast_to(vals, (W.size,) + vals.shape).copy()


def eigenmode(k: int = 1, length: float = 1.0, horizon: float = 1.0) -> ManufacturedSolution:
    """exp(-(k pi / L)^2 t) sin(k pi x / L) on a static interval."""
    if k < 1:
        raise InvalidInputError("mode index must be >= 1.")
    w = k * math.pi / length
    dom = MovingDomain(IntervalDomain(length), IdentityLaw(1), horizon)

    def u(t, X, W):
        return _broadcast(math.exp(-w * w * t) * np.sin(w * _x(X)), _paths(W))

    def grad_u(t, X, W):
        return _broadcast(math.exp(-w * w * t) * w * np.cos(w * _x(X)), _paths(W))[..., None]

    def zero(t, X, W):
        return np.zeros((_paths(W).size, _x(X).size))

    def zero_grad(t, X, W):
        return np.zeros((_paths(W).size, _x(X).size, 1))

    return ManufacturedSolution(f"eigenmode_k{k}", dom, u, grad_u, zero, zero, zero_grad)


def forced_mode(length: float = 1.0, horizon: float = 1.0) -> ManufacturedSolution:
    """(1 + t) sin(pi x / L) with g1 = [1 + (pi/L)^2 (1 + t)] sin(pi x / L)."""
    w = math.pi / length
    dom = MovingDomain(IntervalDomain(length), IdentityLaw(1), horizon)

    def u(t, X, W):
        return _broadcast((1 + t) * np.sin(w * _x(X)), _paths(W))

    def grad_u(t, X, W):
        return _broadcast((1 + t) * w * np.cos(w * _x(X)), _paths(W))[..., None]

    def g1(t, X, W):
        return _broadcast((1 + w * w * (1 + t)) * np.sin(w * _x(X)), _paths(W))

    def zero(t, X, W):
        return np.zeros((_paths(W).size, _x(X).size))

    def zero_grad(t, X, W):
        return np.zeros((_paths(W).size, _x(X).size, 1))

    return ManufacturedSolution("forced_mode", dom, u, grad_u, g1, zero, zero_grad)


def advected_mode(length: float = 1.0, amplitude: float = 0.2, horizon: float = 1.0,
                  basis: str = "sine") -> ManufacturedSolution:
    """
    e^{-t} sin(pi x / s(t)) on the moving interval (0, s(t)):
      u_t = -u - e^{-t} cos(pi z) pi x s' / s^2,  u_xx = -(pi / s)^2 u,  z = x / s.
    """
    law = EndpointLaw(length, [(basis, amplitude)], horizon)
    dom = MovingDomain(IntervalDomain(length), law, horizon)

    def parts(t, X):
        s = law.endpoint(t)
        x = _x(X)
        z = x / s
        return s, x, z

    def u(t, X, W):
        s, x, z = parts(t, X)
        return _broadcast(math.exp(-t) * np.sin(math.pi * z), _paths(W))

    def grad_u(t, X, W):
        s, x, z = parts(t, X)
        return _broadcast(math.exp(-t) * (math.pi / s) * np.cos(math.pi * z), _paths(W))[..., None]

    def g1(t, X, W):
        s, x, z = parts(t, X)
        ds = law.endpoint_rate(t)
        e = math.exp(-t)
        val = (-e * np.sin(math.pi * z) - e * np.cos(math.pi * z) * math.pi * x * ds / (s * s)
               + (math.pi / s) ** 2 * e * np.sin(math.pi * z))
        return _broadcast(val, _paths(W))

    def zero(t, X, W):
        return np.zeros((_paths(W).size, _x(X).size))

    def zero_grad(t, X, W):
        return np.zeros((_paths(W).size, _x(X).size, 1))

    return ManufacturedSolution("advected_mode", dom, u, grad_u, g1, zero, zero_grad)


def gaussian_bump(center: float = 0.35, width: float = 0.1, decay: float = 1.0, length: float = 1.0,
                  horizon: float = 1.0) -> ManufacturedSolution:
    """
    e^{-decay t} sin(pi x / L) G(x), G = exp(-(x - c)^2 / (2 w^2)): a
    concentrated profile off the weight center, g1 = -e^{-decay t} (decay B + B'').
    """
    if not width > 0:
        raise InvalidInputError("bump width must be positive.")
    if not 0 < center < length:
        raise InvalidInputError("bump center must lie inside the interval.")
    k = math.pi / length
    dom = MovingDomain(IntervalDomain(length), IdentityLaw(1), horizon)

    def profile(X):
        x = _x(X)
        G = np.exp(-((x - center) ** 2) / (2 * width * width))
        dG = -(x - center) / (width * width) * G
        d2G = ((x - center) ** 2 / width ** 4 - 1.0 / (width * width)) * G
        s, c = np.sin(k * x), np.cos(k * x)
        B = s * G
        dB = k * c * G + s * dG
        d2B = -k * k * s * G + 2 * k * c * dG + s * d2G
        return B, dB, d2B

    def u(t, X, W):
        return _broadcast(math.exp(-decay * t) * profile(X)[0], _paths(W))

    def grad_u(t, X, W):
        return _broadcast(math.exp(-decay * t) * profile(X)[1], _paths(W))[..., None]

    def g1(t, X, W):
        B, _, d2B = profile(X)
        return _broadcast(-math.exp(-decay * t) * (decay * B + d2B), _paths(W))

    def zero(t, X, W):
        return np.zeros((_paths(W).size, _x(X).size))

    def zero_grad(t, X, W):
        return np.zeros((_paths(W).size, _x(X).size, 1))

    return ManufacturedSolution("gaussian_bump", dom, u, grad_u, g1, zero, zero_grad)


def geometric_mode(mu: float = 0.0, c: float = 0.5, length: float = 1.0,
                   horizon: float = 1.0) -> ManufacturedSolution:
    """
    X(t) sin(pi x / L), X(t) = exp((mu - c^2/2) t + c W(t)):
      g1 = (mu + (pi/L)^2) u,  g2 = c u.
    """
    w = math.pi / length
    dom = MovingDomain(IntervalDomain(length), IdentityLaw(1), horizon)

    def amp(t, W):
        return np.exp((mu - 0.5 * c * c) * t + c * _paths(W))

    def u(t, X, W):
        return amp(t, W)[:, None] * np.sin(w * _x(X))[None, :]

    def grad_u(t, X, W):
        return (amp(t, W)[:, None] * w * np.cos(w * _x(X))[None, :])[..., None]

    def g1(t, X, W):
        return (mu + w * w) * u(t, X, W)

    def g2(t, X, W):
        return c * u(t, X, W)

    def grad_g2(t, X, W):
        return c * grad_u(t, X, W)

    return ManufacturedSolution("geometric_mode", dom, u, grad_u, g1, g2, grad_g2, stochastic=True)


def corpus(horizon: float = 1.0) -> List[ManufacturedSolution]:
    return [
        eigenmode(1, horizon=horizon),
        eigenmode(2, horizon=horizon),
        forced_mode(horizon=horizon),
        advected_mode(horizon=horizon),
        gaussian_bump(horizon=horizon),
        geometric_mode(horizon=horizon),
    ]


CORPUS: Dict[str, Callable[..., ManufacturedSolution]] = {
    "eigenmode": eigenmode,
    "forced_mode": forced_mode,
    "advected_mode": advected_mode,
    "gaussian_bump": gaussian_bump,
    "geometric_mode": geometric_mode,
}


def substitution_residual(m: ManufacturedSolution, t: float, X, dt: float = 1e-5,
                          h: float = 1e-4) -> float:
    """max |u_t - u_xx - g1| by central differences; deterministic members only."""
    if m.stochastic:
        raise InvalidInputError("substitution_residual needs a deterministic solution.")
    x = _x(X)
    W = np.zeros(1)
    ut = (m.u(t + dt, x, W) - m.u(t - dt, x, W)) / (2 * dt)
    uxx = (m.u(t, x + h, W) - 2 * m.u(t, x, W) + m.u(t, x - h, W)) / (h * h)
    return float(np.max(np.abs(ut - uxx - m.g1(t, x, W))))


def boundary_trace(m: ManufacturedSolution, t: float, W: Optional[np.ndarray] = None) -> float:
    """max |u| on the boundary points of G(t)."""
    Xb = m.domain.boundary_quadrature(t, 0.1)[0]
    return float(np.max(np.abs(m.u(t, Xb, np.zeros(1) if W is None else W))))
