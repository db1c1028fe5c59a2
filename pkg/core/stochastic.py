# core/stochastic.py
# -*- coding: utf-8 -*-
"""
Seeded Brownian increments from a counter-based generator.

Path p of an ensemble with master seed S draws from Philox keyed by (S, p);
step k consumes raw output k. The map raw -> uniform -> normal is the
inverse CDF, so every increment is a pure function of (S, p, k) and the
ensemble is bit-identical regardless of how paths are split over workers.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import stats
from scipy.special import ndtri

from domain.errors import InvalidInputError
from domain.models import IsometryReport, KSReport

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
_TWO_M53 = 2.0 ** -53


@dataclass(frozen=True, eq=False)
class BrownianPath:
    times: np.ndarray
    increments: np.ndarray
    seed: int
    index: int = 0

    @property
    def values(self) -> np.ndarray:
        """W on the grid, W(0) = 0."""
        return np.concatenate([[0.0], np.cumsum(self.increments)])


@dataclass(frozen=True, eq=False)
class Ensemble:
    times: np.ndarray  # (M + 1,)
    increments: np.ndarray  # (N, M)
    base_seed: int

    @property
    def N(self) -> int:
        return int(self.increments.shape[0])

    @property
    def steps(self) -> int:
        return int(self.increments.shape[1])

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    def path(self, p: int) -> BrownianPath:
        return BrownianPath(self.times, self.increments[p], self.base_seed, p)

    @property
    def paths(self) -> List[BrownianPath]:
        return [self.path(p) for p in range(self.N)]

    def values(self) -> np.ndarray:
        """(N, M + 1) array of W on the grid."""
        W = np.zeros((self.N, self.steps + 1))
        np.cumsum(self.increments, axis=1, out=W[:, 1:])
        return W

    def same_noise(self, other: "Ensemble") -> bool:
        return (
            self.base_seed == other.base_seed
            and self.N == other.N
            and self.times.shape == other.times.shape
            and bool(np.array_equal(self.times, other.times))
        )


def _validate_grid(times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise InvalidInputError("Time grid needs at least two points.")
    if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
        raise InvalidInputError("Time grid must be strictly increasing.")
    if t[0] != 0.0:
        raise InvalidInputError("Time grid must start at t = 0.")
    return t


def standard_normals(base_seed: int, path_index: int, count: int) -> np.ndarray:
    """Raw output k of Philox keyed by (seed, path) mapped to N(0, 1) by the inverse CDF."""
    key = np.array([base_seed & _MASK64, path_index & _MASK64], dtype=np.uint64)
    bitgen = np.random.Philox(key=key)
    raw = bitgen.random_raw(count)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53
    return ndtri(u)


def generate_paths(base_seed: int, N: int, times, workers: Optional[int] = None) -> Ensemble:
    if N < 1:
        raise InvalidInputError("N must be >= 1.")
    if not (0 <= int(base_seed) <= _MASK64):
        raise InvalidInputError("Seed must be a 64-bit unsigned integer.")
    t = _validate_grid(times)
    steps = t.size - 1
    sqrt_dt = np.sqrt(np.diff(t))
    out = np.empty((N, steps))

    def fill(lo: int, hi: int) -> None:
        for p in range(lo, hi):
            out[p] = standard_normals(int(base_seed), p, steps) * sqrt_dt

    workers = max(1, int(workers or 1))
    if workers == 1 or N < 2 * workers:
        fill(0, N)
    else:
        bounds = np.linspace(0, N, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda ab: fill(*ab), zip(bounds[:-1], bounds[1:])))
    logger.debug("generated %d Brownian paths over %d steps (seed=%d)", N, steps, base_seed)
    return Ensemble(times=t, increments=out, base_seed=int(base_seed))


def ito_isometry_check(ensemble: Ensemble, integrand) -> IsometryReport:
    """
    Compare E[(sum_k c_k dW_k)^2] with E[sum_k c_k^2 dt_k] for an adapted step integrand.
    `integrand` is (M,) for a deterministic c or (N, M) with c_k depending on W up to t_k only.
    """
    c = np.asarray(integrand, dtype=float)
    if c.ndim == 1:
        c = np.broadcast_to(c, ensemble.increments.shape)
    if c.shape != ensemble.increments.shape:
        raise InvalidInputError("Integrand shape must be (M,) or (N, M).")
    stoch = np.sum(c * ensemble.increments, axis=1) ** 2
    expected_paths = np.sum(c * c * ensemble.dt, axis=1)
    mc = float(np.mean(stoch))
    expected = float(np.mean(expected_paths))
    diff = stoch - expected_paths
    se = float(np.std(diff, ddof=1) / math.sqrt(ensemble.N)) if ensemble.N > 1 else 0.0
    if expected == 0.0:
        rel = 0.0 if mc == 0.0 else math.inf
    else:
        rel = abs(mc - expected) / expected
    within = abs(mc - expected) <= 3.0 * se if se > 0 else mc == expected
    return IsometryReport(mc_value=mc, mc_stderr=se, expected=expected, relative_error=rel,
                          within_band=bool(within))


def increment_ks_test(ensemble: Ensemble, significance: float = 0.01) -> KSReport:
    """Kolmogorov-Smirnov test of the normalized increments against N(0, 1)."""
    z = (ensemble.increments / np.sqrt(ensemble.dt)).ravel()
    res = stats.kstest(z, "norm")
    return KSReport(statistic=float(res.statistic), pvalue=float(res.pvalue),
                    passed=bool(res.pvalue >= significance))


def lag_correlation(ensemble: Ensemble, lag: int = 1) -> float:
    """Sample correlation of normalized increments k and k + lag across the ensemble."""
    z = ensemble.increments / np.sqrt(ensemble.dt)
    if lag >= z.shape[1]:
        raise InvalidInputError("lag exceeds the number of steps.")
    a = z[:, :-lag].ravel()
    b = z[:, lag:].ravel()
    return float(np.corrcoef(a, b)[0, 1])
