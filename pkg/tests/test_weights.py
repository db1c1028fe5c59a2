# tests/test_weights.py
# -*- coding: utf-8 -*-

from __future__ import annotations

import math

import numpy as np
import pytest

from core.weights import (
    S_MAX,
    CarlemanWeights,
    Mollifier,
    build_sigma_table,
    compute_c0,
    default_sigma_table,
    exponent_closed_form,
    exponent_quad,
    lambda_threshold,
    level_set_membership,
    mollifier_psi2,
    sigma,
    sigma_prime,
    space_time_cutoff,
    spatial_cutoff,
    weight_bounds_check,
)
from domain.errors import DomainError, InvalidInputError, PreconditionError


@pytest.mark.parametrize("s", [1e-6, 1e-3, 0.05, 0.2, S_MAX])
def test_quadrature_matches_closed_form(s):
    assert exponent_quad(s) == pytest.approx(float(exponent_closed_form(s)), abs=1e-11)


def test_sigma_bounds():
    c0 = compute_c0()
    for s in (1e-4, 0.01, 0.1, 0.3, S_MAX):
        v = sigma(s)
        assert v <= s
        assert v >= s * math.exp(-c0) * (1 - 1e-12)


@pytest.mark.parametrize("s", [0.0, -0.1, 0.5, float("nan")])
def test_sigma_outside_domain(s):
    with pytest.raises(DomainError):
        sigma(s)


def test_sigma_derivative_stays_between_floor_and_one():
    table = default_sigma_table()
    d = sigma_prime(table.grid)
    assert np.all(d <= 1.0)
    assert np.all(d >= table.derivative_floor * (1 - 1e-12))


def test_table_bounds_and_ode_residual():
    table = build_sigma_table(400)
    assert table.bounds_hold()
    assert np.max(np.abs(table.ode_residual()) * table.grid) < 1e-8


def test_table_interpolates_quadrature():
    table = default_sigma_table()
    for s in (0.001, 0.07, 0.33):
        assert float(table(s)) == pytest.approx(sigma(s), rel=1e-8)


def test_lambda_threshold():
    assert lambda_threshold(0.0, 0.0) == pytest.approx(0.5 + math.e / 4)
    assert lambda_threshold(1.0, 2.0) == pytest.approx(math.e * 17 / 8)


def _weights(lam: float = 1.0, x0=(0.5,)) -> CarlemanWeights:
    return CarlemanWeights(t0=0.3, x0=np.array(x0), a=0.05, b=0.25, lam=lam, sigma=default_sigma_table())


def test_weights_preconditions():
    table = default_sigma_table()
    with pytest.raises(PreconditionError):
        CarlemanWeights(t0=0.3, x0=np.array([0.0]), a=0.2, b=0.25, lam=1.0, sigma=table)
    with pytest.raises(PreconditionError):
        CarlemanWeights(t0=0.1, x0=np.array([0.0]), a=0.05, b=0.25, lam=1.0, sigma=table)
    with pytest.raises(PreconditionError) as err:
        CarlemanWeights(t0=0.3, x0=np.array([0.0]), a=0.05, b=0.25, lam=0.5, sigma=table)
    assert err.value.bound == "lambda >= 1"


def test_phi_outside_window_raises():
    w = _weights()
    with pytest.raises(DomainError):
        w.phi(0.0, [[0.5]])


def test_phi_gradient_and_laplacian():
    w = _weights(lam=2.0)
    x = np.array([[0.7]])
    t = 0.2
    h = 1e-5
    fd = (w.phi(t, x + h) - w.phi(t, x - h)) / (2 * h)
    assert w.grad_phi(t, x)[0, 0] == pytest.approx(float(fd[0]), rel=1e-6)
    lap = (w.phi(t, x + 1e-3) - 2 * w.phi(t, x) + w.phi(t, x - 1e-3)) / 1e-6
    assert w.lap_phi(t, x)[0] == pytest.approx(float(lap[0]), rel=1e-4)


def test_level_set_contains_focal_point_at_t0():
    w = _weights()
    assert level_set_membership(0.3, [[0.5]], 1.0, w)[0]
    assert not level_set_membership(0.3, [[3.0]], 1.0, w)[0]
    with pytest.raises(InvalidInputError):
        level_set_membership(0.3, [[0.5]], 0.0, w)


def test_weight_lower_bound_inside_level_set():
    w = _weights()
    rep = weight_bounds_check(w, 1.0, k=0, nt=41, nx=41)
    assert rep.n_inner > 0 and rep.n_annulus > 0
    assert rep.min_ratio_inner >= 1.0
    assert rep.fitted_C > 0


def test_weight_bounds_rejects_order():
    with pytest.raises(InvalidInputError):
        weight_bounds_check(_weights(), 1.0, k=3)


def test_mollifier_profile():
    m = Mollifier(0.0, 1.0)
    val, d1, _ = mollifier_psi2(np.array([-1.0, 0.0, 0.25, 0.5, 0.75, 1.0, 2.0]), m)
    assert val[0] == 1.0 and val[1] == pytest.approx(1.0)
    assert val[-1] == 0.0 and val[-2] == pytest.approx(0.0, abs=1e-12)
    assert val[3] == pytest.approx(0.5, abs=1e-6)
    assert np.all(np.diff(val) <= 1e-12)
    assert np.all(d1 <= 0.0)


def test_mollifier_needs_ordered_levels():
    with pytest.raises(InvalidInputError):
        Mollifier(1.0, 1.0)


def test_space_time_cutoff_levels():
    w = _weights()
    near = space_time_cutoff(0.3, [[0.5]], w, 2.0)
    far = space_time_cutoff(0.3, [[2.0]], w, 2.0)
    assert near.value[0] == pytest.approx(1.0)
    assert far.value[0] == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(near.grad, 0.0)


def test_spatial_cutoff_inner_and_outer():
    v = spatial_cutoff([[0.0, 0.0], [0.05, 0.0], [0.5, 0.0]], (0.0, 0.0), 0.1, 0.2)
    assert v[0] == pytest.approx(1.0)
    assert v[1] == pytest.approx(1.0)
    assert v[2] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(InvalidInputError):
        spatial_cutoff([[0.0]], (0.0,), 0.2, 0.1)
