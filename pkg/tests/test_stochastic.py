# tests/test_stochastic.py
# -*- coding: utf-8 -*-

from __future__ import annotations

import numpy as np
import pytest

from core.stochastic import (
    generate_paths,
    increment_ks_test,
    ito_isometry_check,
    lag_correlation,
    standard_normals,
)
from domain.errors import InvalidInputError

TIMES = np.linspace(0.0, 1.0, 51)


def test_same_seed_same_ensemble():
    a = generate_paths(7, 10, TIMES)
    b = generate_paths(7, 10, TIMES)
    assert np.array_equal(a.increments, b.increments)
    assert a.same_noise(b)


def test_worker_count_does_not_change_paths():
    serial = generate_paths(11, 16, TIMES, workers=1)
    threaded = generate_paths(11, 16, TIMES, workers=4)
    assert np.array_equal(serial.increments, threaded.increments)


def test_path_depends_only_on_seed_and_index():
    small = generate_paths(3, 5, TIMES)
    large = generate_paths(3, 12, TIMES)
    assert np.array_equal(small.increments, large.increments[:5])


def test_prefix_of_longer_grid_matches():
    coarse = standard_normals(9, 2, 10)
    fine = standard_normals(9, 2, 40)
    assert np.array_equal(coarse, fine[:10])


def test_different_seeds_differ():
    a = generate_paths(1, 4, TIMES)
    b = generate_paths(2, 4, TIMES)
    assert not np.array_equal(a.increments, b.increments)
    assert not a.same_noise(b)


def test_brownian_values_start_at_zero():
    ens = generate_paths(5, 3, TIMES)
    W = ens.values()
    assert W.shape == (3, TIMES.size)
    assert np.all(W[:, 0] == 0.0)
    assert np.allclose(ens.path(1).values, W[1])


@pytest.mark.parametrize("times", [[0.0], [0.0, 0.5, 0.5], [0.1, 0.2, 0.3], [0.0, float("inf")]])
def test_invalid_time_grid(times):
    with pytest.raises(InvalidInputError):
        generate_paths(0, 2, times)


def test_invalid_sample_count_and_seed():
    with pytest.raises(InvalidInputError):
        generate_paths(0, 0, TIMES)
    with pytest.raises(InvalidInputError):
        generate_paths(-1, 2, TIMES)


def test_increment_moments():
    ens = generate_paths(21, 400, TIMES)
    dt = TIMES[1] - TIMES[0]
    assert abs(float(np.mean(ens.increments))) < 0.01
    assert float(np.var(ens.increments)) == pytest.approx(dt, rel=0.05)


def test_ito_isometry_for_unit_integrand():
    ens = generate_paths(13, 4000, np.linspace(0.0, 1.0, 11))
    rep = ito_isometry_check(ens, np.ones(ens.steps))
    assert rep.expected == pytest.approx(1.0)
    assert rep.relative_error < 0.1
    assert rep.mc_stderr > 0


def test_ito_isometry_for_adapted_integrand():
    ens = generate_paths(17, 4000, np.linspace(0.0, 1.0, 21))
    W = ens.values()[:, :-1]
    rep = ito_isometry_check(ens, W)
    # E int_0^1 W^2 dt = 1/2 in the limit; left-point sums give 0.475 here
    assert rep.expected == pytest.approx(0.475, rel=0.1)
    assert rep.relative_error < 0.15


def test_isometry_rejects_bad_shape():
    ens = generate_paths(1, 3, TIMES)
    with pytest.raises(InvalidInputError):
        ito_isometry_check(ens, np.ones((2, 2)))


def test_normalized_increments_look_gaussian():
    ens = generate_paths(23, 200, np.linspace(0.0, 1.0, 101))
    ks = increment_ks_test(ens)
    assert ks.statistic < 0.05
    assert abs(lag_correlation(ens, 1)) < 0.05


def test_lag_must_fit_the_grid():
    ens = generate_paths(1, 3, np.linspace(0.0, 1.0, 4))
    with pytest.raises(InvalidInputError):
        lag_correlation(ens, 3)
