# tests/test_verify.py
# -*- coding: utf-8 -*-

from __future__ import annotations

import math

import numpy as np
import pytest

from core.manufactured import (
    ManufacturedSolution,
    advected_mode,
    boundary_trace,
    corpus,
    eigenmode,
    forced_mode,
    gaussian_bump,
    geometric_mode,
    substitution_residual,
)
from core.motion import IdentityLaw, IntervalDomain, MovingDomain
from core.solver import EnsembleField, build_reference_grid
from core.verify import (
    ball_in_cone,
    carleman_residual,
    carleman_time_grid,
    chain_nesting_holds,
    check_two_sphere_params,
    cone_chain_build,
    fit_log_law,
    geometric_iteration_bound,
    iteration_bound_dominates,
    k_bar_in_bracket,
    log_law_bound,
    small_propagation_check,
    sucp_probe,
    two_sphere_fit,
    two_sphere_validate,
    unrolled_recursion,
)
from core.weights import CarlemanWeights, default_sigma_table
from domain.errors import InsufficientDataError, InvalidInputError, PreconditionError
from domain.models import Estimate, GeometryParams, IterationState, TwoSphereParams, TwoSphereReport


def _weights(lam: float = 2.0) -> CarlemanWeights:
    return CarlemanWeights(t0=0.3, x0=np.array([0.5]), a=0.05, b=0.25, lam=lam, sigma=default_sigma_table())


def _geometry() -> GeometryParams:
    return GeometryParams(R0=1.0, E=2.0, rho0=0.2, alpha=math.pi / 6, eta1=0.3)


# ---------- weighted estimate ----------
def test_carleman_time_grid_spans_the_window():
    w = _weights()
    t = carleman_time_grid(w, 33)
    assert t[0] == pytest.approx(0.05)
    assert t[-1] == pytest.approx(0.3)
    assert np.all(np.diff(t) > 0)
    # geometric in the shifted time, so nodes cluster near t0
    assert t[-1] - t[-2] < t[1] - t[0]
    with pytest.raises(InvalidInputError):
        carleman_time_grid(w, 2)


def test_carleman_residual_terms_on_eigenmode():
    rep = carleman_residual(eigenmode(1), _weights(), cells=64, nt=17)
    assert rep.name == "eigenmode_k1"
    assert rep.lhs_u > 0 and rep.lhs_grad > 0
    assert rep.rhs_source == 0.0
    assert rep.M[1] > 0
    assert math.isfinite(rep.margin)
    assert rep.log_scale > 0


@pytest.mark.slow
def test_carleman_residual_on_stochastic_member():
    rep = carleman_residual(geometric_mode(), _weights(), cells=64, nt=17, n_paths=50, seed=3)
    assert rep.margin_stderr > 0
    assert rep.N[0] > 0


def test_carleman_residual_needs_zero_trace():
    dom = MovingDomain(IntervalDomain(1.0), IdentityLaw(1), 1.0)

    def one(t, X, W):
        return np.ones((np.atleast_1d(W).size, np.asarray(X).reshape(-1).size))

    def zero_grad(t, X, W):
        return np.zeros((np.atleast_1d(W).size, np.asarray(X).reshape(-1).size, 1))

    m = ManufacturedSolution("flat", dom, one, zero_grad, one, one, zero_grad)
    with pytest.raises(PreconditionError):
        carleman_residual(m, _weights(), cells=32, nt=9)


@pytest.mark.parametrize("member", [eigenmode(1), eigenmode(2), forced_mode(), gaussian_bump()])
def test_static_members_satisfy_their_equation(member):
    X = np.linspace(0.1, 0.9, 9)
    assert substitution_residual(member, 0.4, X) < 1e-4
    assert boundary_trace(member, 0.4) < 1e-12


def test_advected_member_satisfies_its_equation():
    m = advected_mode()
    X = np.linspace(0.1, 1.0, 10)
    assert substitution_residual(m, 0.5, X) < 1e-4
    assert boundary_trace(m, 0.5) < 1e-12


def test_corpus_rejects_stochastic_substitution():
    members = corpus()
    assert len(members) == 6
    stochastic = [m for m in members if m.stochastic]
    with pytest.raises(InvalidInputError):
        substitution_residual(stochastic[0], 0.5, [0.5])


# ---------- two-sphere one-cylinder ----------
def test_two_sphere_parameter_checks():
    with pytest.raises(PreconditionError):
        check_two_sphere_params(TwoSphereParams(r=0.1, rho=0.05, R=0.5, x0=(0.5,), t0=1.0))
    with pytest.raises(PreconditionError):
        check_two_sphere_params(TwoSphereParams(r=0.05, rho=0.2, R=0.5, x0=(0.5,), t0=1.0))
    with pytest.raises(PreconditionError):
        check_two_sphere_params(TwoSphereParams(r=0.01, rho=0.05, R=0.5, x0=(0.0,), t0=1.0,
                                                regime="boundary"))
    check_two_sphere_params(TwoSphereParams(r=0.02, rho=0.1, R=0.4, x0=(0.5,), t0=1.0))


def _report(r: float, lhs: float, eps1: float, energy: float) -> TwoSphereReport:
    p = TwoSphereParams(r=r, rho=0.1, R=0.4, x0=(0.5,), t0=1.0)
    return TwoSphereReport(params=p, eps1=Estimate(eps1), energy=Estimate(energy), lhs=Estimate(lhs))


def test_two_sphere_fit_covers_its_sweep():
    reports = [_report(r, lhs, eps1, 1.0) for r, lhs, eps1 in
               [(0.01, 0.3, 0.05), (0.02, 0.4, 0.1), (0.04, 0.5, 0.2), (0.05, 0.6, 0.3)]]
    fit = two_sphere_fit(reports)
    assert fit.n_used == 4 and fit.n_excluded == 0
    assert fit.C_exp >= 1.0
    assert min(fit.slacks) >= -1e-9
    assert two_sphere_validate(fit, reports).passed


def test_two_sphere_fit_excludes_trivial_reports():
    reports = [_report(0.02, 0.0, 0.0, 1.0)] + [_report(r, 0.5, 0.1, 1.0) for r in (0.01, 0.02, 0.04)]
    fit = two_sphere_fit(reports)
    assert fit.n_excluded == 1
    with pytest.raises(InsufficientDataError):
        two_sphere_fit(reports[:3])


def test_two_sphere_validate_flags_violations():
    reports = [_report(r, 0.5, 0.1, 1.0) for r in (0.01, 0.02, 0.04)]
    fit = two_sphere_fit(reports)
    bad = _report(0.02, 50.0, 0.1, 1.0)
    result = two_sphere_validate(fit, [bad, reports[0]])
    assert result.n_checked == 2
    assert result.violations == (0,)


# ---------- strong unique continuation ----------
def _quadratic_field(cells: int = 1000) -> EnsembleField:
    dom = MovingDomain(IntervalDomain(1.0), IdentityLaw(1), 1.0)
    grid = build_reference_grid(dom.reference, cells)
    return EnsembleField.from_function(dom, grid, [0.0, 1.0], lambda t, X: (X[:, 0] - 0.5) ** 2)


def test_sucp_recovers_vanishing_order():
    rep = sucp_probe(_quadratic_field(), 1.0, (0.5,), [0.2, 0.1, 0.05, 0.025])
    assert not rep.inconclusive
    assert rep.finite_order
    assert rep.slope == pytest.approx(5.0, abs=0.2)
    assert rep.vanishing_order == pytest.approx(2.0, abs=0.1)


def test_sucp_on_zero_field_is_inconclusive(unit_interval, interval_grid):
    u = EnsembleField.from_function(unit_interval, interval_grid, [0.0, 1.0], lambda t, X: np.zeros(len(X)))
    rep = sucp_probe(u, 1.0, (0.5,), [0.2, 0.1])
    assert rep.inconclusive
    assert math.isnan(rep.slope)


def test_sucp_radii_checks():
    u = _quadratic_field(200)
    with pytest.raises(InvalidInputError):
        sucp_probe(u, 1.0, (0.5,), [0.1, 0.2])
    with pytest.raises(InvalidInputError):
        sucp_probe(u, 1.0, (0.5,), [0.1])
    with pytest.raises(InvalidInputError):
        sucp_probe(u, 1.0, (0.5,), [0.6, 0.1])


# ---------- iteration lemma ----------
@pytest.mark.parametrize("n", [1, 2, 5, 20])
def test_iteration_bound_dominates_unrolled_recursion(n):
    st = IterationState(x1=0.01, C1=2.0, s=0.5, n=n)
    assert iteration_bound_dominates(st)
    assert geometric_iteration_bound(st) >= unrolled_recursion(st) * (1 - 1e-12)


def test_iteration_state_checks():
    with pytest.raises(InvalidInputError):
        unrolled_recursion(IterationState(x1=0.01, C1=1.0, s=0.5, n=3))
    with pytest.raises(InvalidInputError):
        geometric_iteration_bound(IterationState(x1=0.01, C1=2.0, s=1.0, n=3))


# ---------- cone chain ----------
def test_cone_chain_nesting_and_bracket():
    chain = cone_chain_build((0.0, 0.0), (1.0, 0.0), _geometry(), 0.05)
    assert chain.k_bar == 27
    assert k_bar_in_bracket(chain)
    assert chain_nesting_holds(chain, _geometry())
    assert np.all(np.diff(chain.rho) < 0)


def test_cone_chain_rejects_large_sigma():
    with pytest.raises(InvalidInputError):
        cone_chain_build((0.0, 0.0), (1.0, 0.0), _geometry(), 0.5)
    with pytest.raises(InvalidInputError):
        cone_chain_build((0.0, 0.0), (0.0, 0.0), _geometry(), 0.05)


def test_geometry_params_bound_eta1_below_inverse_e():
    with pytest.raises(InvalidInputError):
        GeometryParams(R0=1.0, E=2.0, rho0=0.2, alpha=math.pi / 6, eta1=0.5)
    with pytest.raises(InvalidInputError):
        GeometryParams(R0=1.0, E=2.0, rho0=0.2, alpha=math.pi / 6, eta1=math.exp(-1.0))
    assert GeometryParams(R0=1.0, E=2.0, rho0=0.2, alpha=math.pi / 6, eta1=0.36).eta1 == 0.36


def test_ball_in_cone():
    assert ball_in_cone((0.1, 0.0), 0.04, (0.0, 0.0), (1.0, 0.0), 0.2, math.pi / 6)
    assert not ball_in_cone((0.1, 0.0), 0.06, (0.0, 0.0), (1.0, 0.0), 0.2, math.pi / 6)
    assert not ball_in_cone((0.18, 0.0), 0.04, (0.0, 0.0), (1.0, 0.0), 0.2, math.pi / 6)


def test_small_propagation_on_small_field(unit_interval, interval_grid):
    chain = cone_chain_build((0.0,), (1.0,), _geometry(), 0.05)
    u = EnsembleField.from_function(unit_interval, interval_grid, [0.0, 1.0],
                                    lambda t, X: np.full(len(X), 0.1))
    rep = small_propagation_check(u, chain, math.e)
    assert 0 < rep.sigma_local < 1
    assert rep.C1 > 1
    assert rep.consistent
    assert rep.informative


def test_small_propagation_preconditions(unit_interval, interval_grid):
    chain = cone_chain_build((0.0,), (1.0,), _geometry(), 0.05)
    big = EnsembleField.from_function(unit_interval, interval_grid, [0.0, 1.0],
                                      lambda t, X: np.full(len(X), 1000.0))
    with pytest.raises(PreconditionError):
        small_propagation_check(big, chain, math.e)
    with pytest.raises(InvalidInputError):
        small_propagation_check(big, chain, 2.0)


def test_fit_log_law():
    assert fit_log_law([0.1, 0.01], [0.5, 0.5], math.e, 1.0) == 1.0
    C = fit_log_law([0.1, 0.01], [5.0, 5.0], math.e, 1.0)
    assert C > 1.0
    assert all(5.0 <= log_law_bound(C, math.e, s, 1.0) for s in (0.1, 0.01))
    with pytest.raises(InsufficientDataError):
        fit_log_law([], [], math.e, 1.0)
    with pytest.raises(InvalidInputError):
        fit_log_law([1.5], [0.1], math.e, 1.0)
