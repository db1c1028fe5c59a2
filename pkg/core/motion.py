# core/motion.py
# -*- coding: utf-8 -*-
"""
Reference domains G(0) and the motion laws tau(t, .) that carry them to G(t).

Everything here is vectorized over rows: reference points Y and physical
points X are (m, n) arrays. Laws only need to provide tau; the inverse map,
its Jacobian rows, Hessian rows and time derivative fall back to Newton
iteration and central differences when no closed form is given.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from domain.errors import InvalidInputError, OutOfDomainError
from domain.models import DomainSnapshot

logger = logging.getLogger(__name__)


def _rows(Y, dim: int) -> np.ndarray:
    arr = np.asarray(Y, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, dim) if dim > 1 else arr.reshape(-1, 1)
    return arr


# ---------- reference domains ----------
class ReferenceDomain:
    dim = 1
    kind = "reference"

    def sdf(self, Y: np.ndarray) -> np.ndarray:
        """Signed distance (negative inside); sign exact, magnitude approximate for stars."""
        raise NotImplementedError

    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def boundary_sample(self, spacing: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(points, outward unit normals, surface weights)."""
        raise NotImplementedError

    def fixed_boundary(self, Y: np.ndarray) -> np.ndarray:
        """Mask of points belonging to the known part Gamma of the boundary."""
        raise NotImplementedError

    def interior_sample(self, spacing: float) -> np.ndarray:
        lo, hi = self.bbox()
        axes = [
            np.linspace(lo[k], hi[k], max(2, int(math.ceil((hi[k] - lo[k]) / spacing)) + 1))
            for k in range(self.dim)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        return pts[self.sdf(pts) < 0.0]

    def inradius(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class IntervalDomain(ReferenceDomain):
    """(0, L); Gamma is the left end, the moving boundary I is the right end."""

    length: float = 1.0
    dim = 1
    kind = "interval"

    def __post_init__(self):
        if not self.length > 0:
            raise InvalidInputError("Interval length must be positive.")

    def sdf(self, Y):
        y = _rows(Y, 1)[:, 0]
        return np.maximum(-y, y - self.length)

    def bbox(self):
        return np.array([0.0]), np.array([self.length])

    def boundary_sample(self, spacing: float):
        pts = np.array([[0.0], [self.length]])
        normals = np.array([[-1.0], [1.0]])
        return pts, normals, np.ones(2)

    def fixed_boundary(self, Y):
        y = _rows(Y, 1)[:, 0]
        return np.abs(y) <= 1e-12 * max(1.0, self.length)

    def inradius(self) -> float:
        return 0.5 * self.length


@dataclass(frozen=True)
class StarDomain(ReferenceDomain):
    """
    Star-shaped planar domain with radius r(phi) = r0 + sum_k a_k cos(k phi) + b_k sin(k phi).
    Gamma is the arc phi in [gamma_lo, gamma_hi].
    """

    r0: float = 1.0
    center: Tuple[float, float] = (0.0, 0.0)
    harmonics: Tuple[Tuple[int, float, float], ...] = ()
    gamma_arc: Tuple[float, float] = (-math.pi / 4, math.pi / 4)
    dim = 2
    kind = "star"

    def __post_init__(self):
        if not self.r0 > 0:
            raise InvalidInputError("Star radius r0 must be positive.")
        phi = np.linspace(0.0, 2 * math.pi, 721)
        if np.min(self.radius(phi)) <= 0:
            raise InvalidInputError("Star radius function must stay positive.")

    def radius(self, phi):
        r = np.full_like(np.asarray(phi, dtype=float), self.r0)
        for k, a, b in self.harmonics:
            r = r + a * np.cos(k * phi) + b * np.sin(k * phi)
        return r

    def radius_dphi(self, phi):
        d = np.zeros_like(np.asarray(phi, dtype=float))
        for k, a, b in self.harmonics:
            d = d - k * a * np.sin(k * phi) + k * b * np.cos(k * phi)
        return d

    def _polar(self, Y):
        z = _rows(Y, 2) - np.asarray(self.center)
        return np.hypot(z[:, 0], z[:, 1]), np.arctan2(z[:, 1], z[:, 0])

    def sdf(self, Y):
        r, phi = self._polar(Y)
        return r - self.radius(phi)

    def bbox(self):
        phi = np.linspace(0.0, 2 * math.pi, 721)
        rmax = float(np.max(self.radius(phi)))
        c = np.asarray(self.center, dtype=float)
        return c - rmax, c + rmax

    def boundary_sample(self, spacing: float):
        rmax = float(np.max(self.radius(np.linspace(0, 2 * math.pi, 721))))
        count = max(16, int(math.ceil(2 * math.pi * rmax / spacing)))
        phi = (np.arange(count) + 0.5) * (2 * math.pi / count)
        r = self.radius(phi)
        dr = self.radius_dphi(phi)
        cos, sin = np.cos(phi), np.sin(phi)
        pts = np.asarray(self.center) + np.stack([r * cos, r * sin], axis=1)
        tangent = np.stack([dr * cos - r * sin, dr * sin + r * cos], axis=1)
        tlen = np.linalg.norm(tangent, axis=1)
        normals = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1) / tlen[:, None]
        return pts, normals, tlen * (2 * math.pi / count)

    def fixed_boundary(self, Y):
        _, phi = self._polar(Y)
        lo, hi = self.gamma_arc
        rel = np.mod(phi - lo, 2 * math.pi)
        return rel <= (hi - lo)

    def inradius(self) -> float:
        return float(np.min(self.radius(np.linspace(0, 2 * math.pi, 721))))


def disk(radius: float = 1.0, center=(0.0, 0.0), gamma_arc=(-math.pi / 4, math.pi / 4)) -> StarDomain:
    return StarDomain(r0=radius, center=tuple(center), gamma_arc=tuple(gamma_arc))


@dataclass(frozen=True)
class LShapeDomain(ReferenceDomain):
    """[0,2s]x[0,s] union [0,s]x[0,2s]; Gamma is the bottom edge."""

    size: float = 1.0
    dim = 2
    kind = "lshape"

    def _vertices(self) -> np.ndarray:
        s = self.size
        return np.array([[0, 0], [2 * s, 0], [2 * s, s], [s, s], [s, 2 * s], [0, 2 * s]], dtype=float)

    @staticmethod
    def _box_sdf(P, lo, hi):
        c = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        q = np.abs(P - c) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(np.max(q, axis=1), 0.0)
        return outside + inside

    def sdf(self, Y):
        P = _rows(Y, 2)
        s = self.size
        a = self._box_sdf(P, np.array([0.0, 0.0]), np.array([2 * s, s]))
        b = self._box_sdf(P, np.array([0.0, 0.0]), np.array([s, 2 * s]))
        return np.minimum(a, b)

    def bbox(self):
        return np.zeros(2), np.full(2, 2 * self.size)

    def boundary_sample(self, spacing: float):
        V = self._vertices()
        pts, normals, weights = [], [], []
        for i in range(len(V)):
            p, q = V[i], V[(i + 1) % len(V)]
            edge = q - p
            length = float(np.linalg.norm(edge))
            count = max(1, int(math.ceil(length / spacing)))
            frac = (np.arange(count) + 0.5) / count
            pts.append(p + frac[:, None] * edge)
            nrm = np.array([edge[1], -edge[0]]) / length
            normals.append(np.repeat(nrm[None, :], count, axis=0))
            weights.append(np.full(count, length / count))
        return np.vstack(pts), np.vstack(normals), np.concatenate(weights)

    def fixed_boundary(self, Y):
        P = _rows(Y, 2)
        return np.abs(P[:, 1]) <= 1e-12

    def inradius(self) -> float:
        return 0.5 * self.size


# ---------- motion laws ----------
class MotionLaw:
    """tau(t, y); subclasses override the closed forms they know."""

    name = "law"
    dim = 1
    static = False

    def tau(self, t: float, Y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dtau(self, t: float, Y: np.ndarray, step: float = 1e-6) -> np.ndarray:
        Y = _rows(Y, self.dim)
        m, n = Y.shape
        D = np.empty((m, n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = step
            D[:, :, j] = (self.tau(t, Y + e) - self.tau(t, Y - e)) / (2 * step)
        return D

    def tau_t(self, t: float, Y: np.ndarray, step: float = 1e-6) -> np.ndarray:
        Y = _rows(Y, self.dim)
        return (self.tau(t + step, Y) - self.tau(t - step, Y)) / (2 * step)

    def rho(self, t: float, X: np.ndarray, guess: Optional[np.ndarray] = None,
            tol: float = 1e-13, max_iter: int = 60) -> np.ndarray:
        X = _rows(X, self.dim)
        Y = X.copy() if guess is None else np.array(guess, dtype=float, copy=True)
        for _ in range(max_iter):
            R = self.tau(t, Y) - X
            if np.max(np.abs(R), initial=0.0) <= tol * max(1.0, float(np.max(np.abs(X), initial=1.0))):
                break
            Y = Y - np.linalg.solve(self.dtau(t, Y), R[:, :, None])[:, :, 0]
        return Y

    def jacobians(self, t: float, Y: np.ndarray, step: float = 1e-5):
        """
        (J, H, rho_t) at the physical point tau(t, y):
          J[m, k, i] = d rho_k / d x_i
          H[m, k, i] = d^2 rho_k / d x_i^2
          rho_t[m, k] = d rho_k / d t
        """
        Y = _rows(Y, self.dim)
        m, n = Y.shape
        J = np.linalg.inv(self.dtau(t, Y))
        X = self.tau(t, Y)
        H = np.empty((m, n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = step
            Jp = np.linalg.inv(self.dtau(t, self.rho(t, X + e, guess=Y)))
            Jm = np.linalg.inv(self.dtau(t, self.rho(t, X - e, guess=Y)))
            H[:, :, i] = (Jp[:, :, i] - Jm[:, :, i]) / (2 * step)
        rho_t = -np.einsum("mki,mi->mk", J, self.tau_t(t, Y))
        return J, H, rho_t

    def describe(self) -> dict:
        return {"law": self.name}


class IdentityLaw(MotionLaw):
    name = "identity"
    static = True

    def __init__(self, dim: int = 1):
        self.dim = int(dim)

    def tau(self, t, Y):
        return _rows(Y, self.dim).copy()

    def rho(self, t, X, guess=None, tol=0.0, max_iter=0):
        return _rows(X, self.dim).copy()

    def dtau(self, t, Y, step=0.0):
        Y = _rows(Y, self.dim)
        return np.broadcast_to(np.eye(self.dim), (Y.shape[0], self.dim, self.dim)).copy()

    def tau_t(self, t, Y, step=0.0):
        return np.zeros_like(_rows(Y, self.dim))

    def jacobians(self, t, Y, step=0.0):
        Y = _rows(Y, self.dim)
        m, n = Y.shape
        return self.dtau(t, Y), np.zeros((m, n, n)), np.zeros((m, n))

    def describe(self):
        return {"law": self.name, "dim": self.dim}


class DilationLaw(MotionLaw):
    """tau(t, y) = c + (1 + rate t)(y - c)."""

    name = "dilation"

    def __init__(self, rate: float = 1.0, center: Sequence[float] = (0.0,)):
        self.rate = float(rate)
        self.center = np.asarray(center, dtype=float)
        self.dim = self.center.size
        self.static = self.rate == 0.0

    def scale(self, t):
        return 1.0 + self.rate * t

    def tau(self, t, Y):
        return self.center + self.scale(t) * (_rows(Y, self.dim) - self.center)

    def rho(self, t, X, guess=None, tol=0.0, max_iter=0):
        return self.center + (_rows(X, self.dim) - self.center) / self.scale(t)

    def dtau(self, t, Y, step=0.0):
        m = _rows(Y, self.dim).shape[0]
        return np.broadcast_to(self.scale(t) * np.eye(self.dim), (m, self.dim, self.dim)).copy()

    def tau_t(self, t, Y, step=0.0):
        return self.rate * (_rows(Y, self.dim) - self.center)

    def jacobians(self, t, Y, step=0.0):
        Y = _rows(Y, self.dim)
        m, n = Y.shape
        sc = self.scale(t)
        J = np.broadcast_to(np.eye(n) / sc, (m, n, n)).copy()
        return J, np.zeros((m, n, n)), -self.rate * (Y - self.center) / sc

    def describe(self):
        return {"law": self.name, "rate": self.rate, "center": self.center.tolist()}


class TranslationLaw(MotionLaw):
    """tau(t, y) = y + v t."""

    name = "translation"

    def __init__(self, velocity: Sequence[float] = (0.0,)):
        self.velocity = np.asarray(velocity, dtype=float)
        self.dim = self.velocity.size
        self.static = not np.any(self.velocity)

    def tau(self, t, Y):
        return _rows(Y, self.dim) + self.velocity * t

    def rho(self, t, X, guess=None, tol=0.0, max_iter=0):
        return _rows(X, self.dim) - self.velocity * t

    def dtau(self, t, Y, step=0.0):
        m = _rows(Y, self.dim).shape[0]
        return np.broadcast_to(np.eye(self.dim), (m, self.dim, self.dim)).copy()

    def tau_t(self, t, Y, step=0.0):
        return np.broadcast_to(self.velocity, _rows(Y, self.dim).shape).copy()

    def jacobians(self, t, Y, step=0.0):
        Y = _rows(Y, self.dim)
        m, n = Y.shape
        return self.dtau(t, Y), np.zeros((m, n, n)), -np.broadcast_to(self.velocity, (m, n)).copy()

    def describe(self):
        return {"law": self.name, "velocity": self.velocity.tolist()}


ENDPOINT_BASES = ("linear", "sine", "quadratic", "ramp", "jump")


def _basis(name: str, z):
    if name == "linear":
        return z, np.ones_like(z)
    if name == "sine":
        return np.sin(math.pi * z), math.pi * np.cos(math.pi * z)
    if name == "quadratic":
        return z * z, 2 * z
    if name == "ramp":
        return np.minimum(2 * z, 1.0), np.where(z < 0.5, 2.0, 0.0)
    if name == "jump":
        return np.where(z >= 0.5, 1.0, 0.0), np.zeros_like(z)
    raise InvalidInputError(f"Unknown endpoint basis {name!r}.")


class EndpointLaw(MotionLaw):
    """
    1-D moving endpoint: G(t) = (0, s(t)), s(t) = L + sum_j amp_j * basis_j(t / T),
    tau(t, y) = y s(t) / L.
    """

    name = "endpoint"
    dim = 1

    def __init__(self, length: float, terms: Sequence[Tuple[str, float]], horizon: float):
        self.length = float(length)
        self.terms = tuple((str(b), float(a)) for b, a in terms)
        self.horizon = float(horizon)
        for b, _ in self.terms:
            if b not in ENDPOINT_BASES:
                raise InvalidInputError(f"Unknown endpoint basis {b!r}.")
        self.static = all(a == 0.0 for _, a in self.terms)
        z = np.linspace(0.0, 1.0, 257)
        if np.min(self._endpoint(z)) <= 0:
            raise InvalidInputError("Moving endpoint must stay positive on [0, T].")

    def _endpoint(self, z):
        s = np.full_like(np.asarray(z, dtype=float), self.length)
        for b, a in self.terms:
            s = s + a * _basis(b, z)[0]
        return s

    def endpoint(self, t: float) -> float:
        return float(self._endpoint(np.asarray(t / self.horizon)))

    def endpoint_rate(self, t: float) -> float:
        z = np.asarray(t / self.horizon)
        return float(sum(a * _basis(b, z)[1] for b, a in self.terms) / self.horizon)

    def ratio(self, t):
        return self.endpoint(t) / self.length

    def tau(self, t, Y):
        return _rows(Y, 1) * self.ratio(t)

    def rho(self, t, X, guess=None, tol=0.0, max_iter=0):
        return _rows(X, 1) / self.ratio(t)

    def dtau(self, t, Y, step=0.0):
        m = _rows(Y, 1).shape[0]
        return np.full((m, 1, 1), self.ratio(t))

    def tau_t(self, t, Y, step=0.0):
        return _rows(Y, 1) * (self.endpoint_rate(t) / self.length)

    def jacobians(self, t, Y, step=0.0):
        Y = _rows(Y, 1)
        m = Y.shape[0]
        r = self.ratio(t)
        dr = self.endpoint_rate(t) / self.length
        return np.full((m, 1, 1), 1.0 / r), np.zeros((m, 1, 1)), -Y * dr / r

    def describe(self):
        return {"law": self.name, "length": self.length, "terms": [list(t) for t in self.terms],
                "horizon": self.horizon}


class RadialFourierLaw(MotionLaw):
    """
    Planar law x = c + z (1 + (t/T) sum_k [alpha_k Re (z/r0)^k + beta_k Im (z/r0)^k]).
    On |z| = r0 the boundary radius becomes r0 (1 + (t/T) sum_k alpha_k cos k phi + beta_k sin k phi),
    and the map is polynomial in y, hence smooth through the center.
    """

    name = "radial"
    dim = 2

    def __init__(self, r0: float, center: Sequence[float], modes: Sequence[Tuple[int, float, float]],
                 horizon: float):
        self.r0 = float(r0)
        self.center = np.asarray(center, dtype=float)
        self.modes = tuple((int(k), float(a), float(b)) for k, a, b in modes)
        self.horizon = float(horizon)
        self.static = all(a == 0.0 and b == 0.0 for _, a, b in self.modes)

    def _harmonic_sum(self, Z):
        w = (Z[:, 0] + 1j * Z[:, 1]) / self.r0
        acc = np.zeros(Z.shape[0])
        for k, a, b in self.modes:
            wk = w ** k
            acc = acc + a * wk.real + b * wk.imag
        return acc

    def _factor(self, t, Z):
        return 1.0 + (t / self.horizon) * self._harmonic_sum(Z)

    def tau(self, t, Y):
        Z = _rows(Y, 2) - self.center
        return self.center + Z * self._factor(t, Z)[:, None]

    def tau_t(self, t, Y, step=0.0):
        Z = _rows(Y, 2) - self.center
        return Z * (self._harmonic_sum(Z) / self.horizon)[:, None]

    def boundary_radius(self, t: float, phi):
        phi = np.asarray(phi, dtype=float)
        acc = np.zeros_like(phi)
        for k, a, b in self.modes:
            acc = acc + a * np.cos(k * phi) + b * np.sin(k * phi)
        return self.r0 * (1.0 + (t / self.horizon) * acc)

    def describe(self):
        return {"law": self.name, "r0": self.r0, "center": self.center.tolist(),
                "modes": [list(m) for m in self.modes], "horizon": self.horizon}


class WaveLaw(MotionLaw):
    """Smooth nonradial planar law tau = y + A (t/T) (sin(w y2), sin(w y1))."""

    name = "wave"
    dim = 2

    def __init__(self, amplitude: float, wavenumber: float, horizon: float):
        self.amplitude = float(amplitude)
        self.wavenumber = float(wavenumber)
        self.horizon = float(horizon)
        self.static = self.amplitude == 0.0
        if abs(self.amplitude * self.wavenumber) >= 1.0:
            raise InvalidInputError("Wave law must satisfy |A w| < 1 to stay a diffeomorphism.")

    def _p(self, t):
        return self.amplitude * t / self.horizon

    def tau(self, t, Y):
        Y = _rows(Y, 2)
        w = self.wavenumber
        shift = np.stack([np.sin(w * Y[:, 1]), np.sin(w * Y[:, 0])], axis=1)
        return Y + self._p(t) * shift

    def dtau(self, t, Y, step=0.0):
        Y = _rows(Y, 2)
        w = self.wavenumber
        p = self._p(t)
        D = np.zeros((Y.shape[0], 2, 2))
        D[:, 0, 0] = 1.0
        D[:, 1, 1] = 1.0
        D[:, 0, 1] = p * w * np.cos(w * Y[:, 1])
        D[:, 1, 0] = p * w * np.cos(w * Y[:, 0])
        return D

    def tau_t(self, t, Y, step=0.0):
        Y = _rows(Y, 2)
        w = self.wavenumber
        shift = np.stack([np.sin(w * Y[:, 1]), np.sin(w * Y[:, 0])], axis=1)
        return (self.amplitude / self.horizon) * shift

    def describe(self):
        return {"law": self.name, "amplitude": self.amplitude, "wavenumber": self.wavenumber,
                "horizon": self.horizon}


# ---------- moving domain ----------
class MovingDomain:
    """The family G(t) = tau(t, G(0)) on [0, T]."""

    def __init__(self, reference: ReferenceDomain, law: MotionLaw, horizon: float,
                 moving_boundary_id: str = "I"):
        if reference.dim != law.dim:
            raise InvalidInputError(
                f"Reference domain is {reference.dim}-D but motion law is {law.dim}-D."
            )
        if not horizon > 0:
            raise InvalidInputError("Horizon T must be positive.")
        self.reference = reference
        self.law = law
        self.horizon = float(horizon)
        self.moving_boundary_id = moving_boundary_id

    @property
    def dim(self) -> int:
        return self.reference.dim

    @property
    def is_static(self) -> bool:
        return bool(self.law.static)

    def tau(self, t, Y):
        return self.law.tau(t, _rows(Y, self.dim))

    def rho(self, t, X):
        return self.law.rho(t, _rows(X, self.dim))

    def sdf(self, t, X) -> np.ndarray:
        return self.reference.sdf(self.rho(t, X))

    def contains(self, t, X, tol: float = 0.0) -> np.ndarray:
        return self.sdf(t, X) <= tol

    def fixed_boundary(self, Y) -> np.ndarray:
        return self.reference.fixed_boundary(_rows(Y, self.dim))

    def jacobians(self, t, Y, step: float = 1e-5):
        return self.law.jacobians(t, _rows(Y, self.dim), step=step)

    def det_dtau(self, t, Y) -> np.ndarray:
        return np.linalg.det(self.law.dtau(t, _rows(Y, self.dim)))

    def boundary_quadrature(self, t: float, spacing: float):
        """Boundary points of G(t) with outward normals and surface weights."""
        Yb, Nref, wref = self.reference.boundary_sample(spacing)
        Xb = self.tau(t, Yb)
        D = self.law.dtau(t, Yb)
        J = np.linalg.inv(D)
        pulled = np.einsum("mki,mk->mi", J, Nref)  # J^T nu_ref
        plen = np.linalg.norm(pulled, axis=1)
        normals = pulled / plen[:, None]
        weights = wref * np.abs(np.linalg.det(D)) * plen
        return Xb, normals, weights

    def snapshot(self, t: float, spacing: float) -> DomainSnapshot:
        Yi = self.reference.interior_sample(spacing)
        Xb, normals, _ = self.boundary_quadrature(t, spacing)
        Xi = self.tau(t, Yi) if Yi.size else Yi.reshape(0, self.dim)
        stretch = 1.0
        if Yi.size:
            stretch = max(1.0, float(np.max(np.linalg.norm(self.law.dtau(t, Yi), ord=2, axis=(1, 2)))))
        return DomainSnapshot(
            time=float(t),
            interior_points=Xi,
            boundary_points=Xb,
            normals=normals,
            spacing=float(spacing) * stretch,
        )

    def validate(self, times: Sequence[float], spacing: float, speed_limit: float = 1e6) -> dict:
        """
        Checks tau(0, .) = id, rho(t, tau(t, y)) = y and a finite time-derivative
        bound on the sampled grid. Raises InvalidInputError on the first two.
        """
        Y = np.vstack([self.reference.interior_sample(spacing), self.reference.boundary_sample(spacing)[0]])
        tol = 1e-9 * max(1.0, float(np.max(np.abs(Y))))
        if np.max(np.abs(self.tau(0.0, Y) - Y)) > tol:
            raise InvalidInputError("Motion law is not the identity at t = 0.")
        times = np.asarray(times, dtype=float)
        worst_roundtrip = 0.0
        prev = None
        max_speed = 0.0
        for k, t in enumerate(times):
            X = self.tau(t, Y)
            worst_roundtrip = max(worst_roundtrip, float(np.max(np.abs(self.rho(t, X) - Y))))
            if prev is not None:
                dt = t - times[k - 1]
                max_speed = max(max_speed, float(np.max(np.abs(X - prev))) / dt)
            prev = X
        if worst_roundtrip > max(1e-8, 0.5 * spacing):
            raise InvalidInputError(f"rho(t, tau(t, y)) misses y by {worst_roundtrip:.3e}.")
        bounded = np.isfinite(max_speed) and max_speed <= speed_limit
        if not bounded:
            logger.warning("motion law %s: time derivative estimate %.3e exceeds %.3e",
                           self.law.name, max_speed, speed_limit)
        return {"roundtrip_error": worst_roundtrip, "max_speed": max_speed, "speed_bounded": bool(bounded)}

    def check_point(self, t: float, Y, tol: float) -> None:
        if np.any(self.reference.sdf(_rows(Y, self.dim)) > tol):
            raise OutOfDomainError(f"Reference point outside G(0) at t = {t:g}.")

    def describe(self) -> dict:
        ref = {"kind": self.reference.kind}
        if isinstance(self.reference, IntervalDomain):
            ref["length"] = self.reference.length
        elif isinstance(self.reference, StarDomain):
            ref.update(r0=self.reference.r0, center=list(self.reference.center),
                       harmonics=[list(h) for h in self.reference.harmonics],
                       gamma_arc=list(self.reference.gamma_arc))
        elif isinstance(self.reference, LShapeDomain):
            ref["size"] = self.reference.size
        return {"reference": ref, "motion": self.law.describe(), "horizon": self.horizon}
