# tests/test_solver.py
# -*- coding: utf-8 -*-

from __future__ import annotations

import math

import numpy as np
import pytest

from core.motion import EndpointLaw, IdentityLaw, IntervalDomain, MovingDomain
from core.solver import (
    CHUNK_PATHS,
    EnsembleField,
    assemble_pullback_operator,
    boundary_values,
    build_reference_grid,
    caccioppoli_check,
    energy_decay_profile,
    heat_kernel,
    heat_kernel_residual,
    mean_square_increments,
    solve,
    step,
    stored_steps,
    weighted_mass_H,
    weighted_mass_limit,
)
from core.stochastic import generate_paths
from domain.errors import DomainError, InvalidInputError, PreconditionError
from tests.helpers import coefficients, form


def test_interval_grid_layout(unit_interval):
    grid = build_reference_grid(unit_interval.reference, 10)
    assert grid.size == 11
    assert grid.interior.tolist() == [False] + [True] * 9 + [False]
    assert grid.gamma.tolist() == [True] + [False] * 10
    assert float(np.sum(grid.weights)) == pytest.approx(1.0)


def test_planar_grid_weights_follow_the_domain(unit_disk):
    grid = build_reference_grid(unit_disk.reference, 24)
    sdf = unit_disk.reference.sdf(grid.points)
    assert np.all(grid.weights[sdf > grid.spacing[0]] == 0.0)
    assert np.all(grid.weights[grid.interior] > 0.0)
    assert float(np.sum(grid.weights)) == pytest.approx(math.pi, rel=0.02)
    assert np.any(grid.gamma)


def test_grid_needs_four_cells(unit_interval):
    with pytest.raises(InvalidInputError):
        build_reference_grid(unit_interval.reference, 3)


def test_identity_operator_is_the_laplacian(unit_interval):
    grid = build_reference_grid(unit_interval.reference, 8)
    op = assemble_pullback_operator(unit_interval, grid, 0.0)
    h = 1.0 / 8
    A = op.A.toarray()
    assert A[3, 3] == pytest.approx(-2.0 / h ** 2)
    assert A[3, 2] == pytest.approx(1.0 / h ** 2)
    assert A[3, 4] == pytest.approx(1.0 / h ** 2)
    assert A[3, 0] == 0.0
    assert op.B.toarray()[0, 0] == pytest.approx(1.0 / h ** 2)
    assert op.min_ellipticity == pytest.approx(1.0)


def test_boundary_values_carry_f_on_gamma_only(unit_interval):
    grid = build_reference_grid(unit_interval.reference, 8)
    coeffs = coefficients(unit_interval, f=form("constant", value=2.0))
    g = boundary_values(unit_interval, grid, coeffs, 0.5)
    assert g.tolist() == [2.0, 0.0]


def test_linear_steady_state_is_preserved(unit_interval):
    grid = build_reference_grid(unit_interval.reference, 32)
    coeffs = coefficients(unit_interval, f=form("constant", value=1.0), u0=form("ramp", value=1.0, length=1.0))
    ens = generate_paths(0, 2, np.linspace(0.0, 0.5, 21))
    u = solve(unit_interval, coeffs, ens, grid, stride=4)
    expected = 1.0 - grid.points[:, 0]
    for i in range(u.n_slices):
        assert np.allclose(u.values[:, i, :], expected, atol=1e-10)


def test_heat_decay_of_first_mode():
    dom = MovingDomain(IntervalDomain(1.0), IdentityLaw(1), 0.1)
    grid = build_reference_grid(dom.reference, 64)
    coeffs = coefficients(dom, F=0.0, u0=form("mode", amplitude=1.0, k=1.0, length=1.0))
    ens = generate_paths(0, 1, np.linspace(0.0, 0.1, 201))
    u = solve(dom, coeffs, ens, grid, stride=200, check_condition=False)
    exact = math.exp(-math.pi ** 2 * 0.1) * np.sin(math.pi * grid.points[:, 0])
    assert u.times[-1] == pytest.approx(0.1)
    assert np.max(np.abs(u.values[0, -1] - exact)) < 5e-3


def test_implicit_euler_also_converges():
    dom = MovingDomain(IntervalDomain(1.0), IdentityLaw(1), 0.1)
    grid = build_reference_grid(dom.reference, 32)
    coeffs = coefficients(dom, F=0.0, u0=form("mode", amplitude=1.0, k=1.0, length=1.0))
    ens = generate_paths(0, 1, np.linspace(0.0, 0.1, 401))
    u = solve(dom, coeffs, ens, grid, theta=1.0, stride=400, check_condition=False)
    exact = math.exp(-math.pi ** 2 * 0.1) * np.sin(math.pi * grid.points[:, 0])
    assert np.max(np.abs(u.values[0, -1] - exact)) < 1e-2


def test_single_step_matches_solve(unit_interval):
    grid = build_reference_grid(unit_interval.reference, 16)
    coeffs = coefficients(unit_interval, c1=form("constant", value=0.5), f=form("constant", value=1.0))
    times = np.linspace(0.0, 0.1, 2)
    ens = generate_paths(4, 1, times)
    u = solve(unit_interval, coeffs, ens, grid)
    stepped = step(unit_interval, grid, coeffs, u.values[0, 0], 0.0, 0.1, ens.increments[0, 0])
    assert np.allclose(stepped, u.values[0, 1], atol=1e-12)


def test_worker_count_does_not_change_the_field(unit_interval):
    grid = build_reference_grid(unit_interval.reference, 16)
    coeffs = coefficients(unit_interval, c1=form("constant", value=0.5), f=form("constant", value=1.0),
                          u0=form("ramp", value=1.0, length=1.0))
    ens = generate_paths(9, 2 * CHUNK_PATHS + 3, np.linspace(0.0, 0.2, 21))
    serial = solve(unit_interval, coeffs, ens, grid, stride=5, workers=1)
    threaded = solve(unit_interval, coeffs, ens, grid, stride=5, workers=3)
    assert np.array_equal(serial.values, threaded.values)


def test_multiplicative_noise_keeps_the_deterministic_mean(unit_interval):
    grid = build_reference_grid(unit_interval.reference, 16)
    u0 = form("mode", amplitude=1.0, k=1.0, length=1.0)
    times = np.linspace(0.0, 0.1, 21)
    noisy = solve(unit_interval, coefficients(unit_interval, F=0.0, c1=form("constant", value=0.5), u0=u0),
                  generate_paths(3, 400, times), grid, stride=20, check_condition=False)
    calm = solve(unit_interval, coefficients(unit_interval, F=0.0, u0=u0),
                 generate_paths(3, 1, times), grid, stride=20, check_condition=False)
    mid = grid.size // 2
    assert noisy.mean()[-1, mid] == pytest.approx(calm.values[0, -1, mid], rel=0.05)
    assert float(np.std(noisy.values[:, -1, mid])) > 0.0


def test_moving_endpoint_pins_boundary_nodes():
    law = EndpointLaw(1.0, [("sine", 0.1)], 1.0)
    dom = MovingDomain(IntervalDomain(1.0), law, 1.0)
    grid = build_reference_grid(dom.reference, 16)
    coeffs = coefficients(dom, c1=form("constant", value=0.3), f=form("constant", value=1.0),
                          u0=form("ramp", value=1.0, length=1.0))
    u = solve(dom, coeffs, generate_paths(2, 4, np.linspace(0.0, 1.0, 41)), grid, stride=10)
    assert np.all(np.isfinite(u.values))
    assert np.all(u.values[:, :, 0] == 1.0)
    assert np.all(u.values[:, :, -1] == 0.0)
    assert u.physical_points(u.n_slices - 1)[-1, 0] == pytest.approx(law.endpoint(1.0))


def test_boundary_condition_is_checked(unit_interval):
    grid = build_reference_grid(unit_interval.reference, 8)
    coeffs = coefficients(unit_interval, F=2.0, f=form("constant", value=1.0))
    with pytest.raises(PreconditionError):
        solve(unit_interval, coeffs, generate_paths(0, 1, np.linspace(0.0, 1.0, 5)), grid)


def test_solve_rejects_bad_theta_and_long_grid(unit_interval):
    grid = build_reference_grid(unit_interval.reference, 8)
    coeffs = coefficients(unit_interval, f=form("constant", value=1.0))
    with pytest.raises(InvalidInputError):
        solve(unit_interval, coeffs, generate_paths(0, 1, np.linspace(0.0, 1.0, 5)), grid, theta=1.5)
    with pytest.raises(InvalidInputError):
        solve(unit_interval, coeffs, generate_paths(0, 1, np.linspace(0.0, 2.0, 5)), grid)


def test_stored_steps_keeps_the_last_step():
    assert stored_steps(10, 4).tolist() == [0, 4, 8, 10]
    assert stored_steps(8, 4).tolist() == [0, 4, 8]
    with pytest.raises(InvalidInputError):
        stored_steps(8, 0)


def test_slice_lookup(unit_interval, interval_grid):
    u = EnsembleField.from_function(unit_interval, interval_grid, [0.0, 0.5, 1.0], lambda t, X: np.ones(len(X)))
    assert u.slice_index(0.5) == 1
    with pytest.raises(InvalidInputError):
        u.slice_index(0.25)
    assert u.nearest_slice(0.3) == 1


def test_field_difference_needs_matching_ensembles(unit_interval, interval_grid):
    a = EnsembleField.from_function(unit_interval, interval_grid, [0.0, 1.0], lambda t, X: np.ones(len(X)))
    b = EnsembleField.from_function(unit_interval, interval_grid, [0.0, 1.0], lambda t, X: np.zeros(len(X)))
    assert np.allclose(a.difference(b).values, 1.0)
    c = EnsembleField.from_function(unit_interval, interval_grid, [0.0, 1.0], lambda t, X: np.ones(len(X)),
                                    n_paths=2)
    with pytest.raises(InvalidInputError):
        a.difference(c)


def test_gradient_of_linear_field(unit_interval, interval_grid):
    u = EnsembleField.from_function(unit_interval, interval_grid, [0.0], lambda t, X: 3.0 * X[:, 0])
    assert np.allclose(u.gradient(0), 3.0)


def test_heat_kernel_solves_the_backward_equation():
    x = np.array([[0.1], [0.3], [-0.2]])
    res = heat_kernel_residual(0.5, x, 1.0, (0.0,), h=1e-3, dt=1e-5)
    assert np.max(np.abs(res)) < 1e-3
    with pytest.raises(DomainError):
        heat_kernel(1.0, x, 1.0, (0.0,))


def test_energy_and_increment_diagnostics(unit_interval):
    grid = build_reference_grid(unit_interval.reference, 16)
    coeffs = coefficients(unit_interval, F=0.0, c1=form("constant", value=0.2),
                          u0=form("mode", amplitude=1.0, k=1.0, length=1.0))
    u = solve(unit_interval, coeffs, generate_paths(1, 8, np.linspace(0.0, 0.5, 41)), grid, stride=8,
              check_condition=False)
    profile = energy_decay_profile(u)
    assert profile.shape == (u.n_slices,)
    assert np.all(np.diff(profile) < 0)
    assert mean_square_increments(u) > 0


def test_caccioppoli_ratio_is_finite(unit_interval):
    grid = build_reference_grid(unit_interval.reference, 64)
    u = EnsembleField.from_function(unit_interval, grid, np.linspace(0.0, 1.0, 11),
                                    lambda t, X: math.exp(-math.pi ** 2 * t) * np.sin(math.pi * X[:, 0]))
    rep = caccioppoli_check(u, 1.0, (0.5,), 1.0, 0.1, 0.2)
    assert rep.grad_energy > 0 and rep.mass > 0
    assert math.isfinite(rep.ratio)
    with pytest.raises(InvalidInputError):
        caccioppoli_check(u, 1.0, (0.5,), 0.3, 0.2, 0.1)


def test_weighted_mass_is_symmetric_and_peaks_at_the_centre(unit_interval, interval_grid):
    u = EnsembleField.from_function(unit_interval, interval_grid, [0.0, 1.0], lambda t, X: np.ones(len(X)))
    H = weighted_mass_H(u, 0, 1.0, [[0.4], [0.5], [0.6], [0.9]], (0.5,), 0.1, 0.2)
    assert len(H) == 4
    assert all(h.value > 0 for h in H)
    assert H[0].value == pytest.approx(H[2].value, rel=1e-9)
    assert H[1].value > H[3].value
    with pytest.raises(DomainError):
        weighted_mass_limit(u, 1, 0, (0.5,), 0.1, 0.2)
