# tests/test_geometry.py
# -*- coding: utf-8 -*-

from __future__ import annotations

import math

import numpy as np
import pytest

from core.geometry import (
    certify_lipschitz,
    check_interior_ball,
    check_speed_bound,
    cone_membership,
    distance_ratio_sweep,
    hausdorff_distance,
    interior_ball_failures,
    interior_shrink,
    lipschitz_cone,
    minimal_speed_constant,
    modified_distance,
    pullback_jacobians,
    speed_bound_report,
)
from core.motion import (
    DilationLaw,
    EndpointLaw,
    IdentityLaw,
    IntervalDomain,
    LShapeDomain,
    MovingDomain,
    RadialFourierLaw,
    StarDomain,
    TranslationLaw,
    WaveLaw,
    disk,
)
from domain.errors import InvalidInputError, OutOfDomainError
from domain.models import DomainSnapshot


def _segment(lo: float, hi: float, h: float = 0.01) -> DomainSnapshot:
    inner = np.arange(lo + h, hi - 0.5 * h, h)[:, None]
    return DomainSnapshot(time=0.0, interior_points=inner, boundary_points=np.array([[lo], [hi]]),
                          normals=np.array([[-1.0], [1.0]]), spacing=h)


def test_hausdorff_of_identical_sets_is_zero():
    a = _segment(0.0, 1.0)
    assert hausdorff_distance(a, a) == 0.0
    assert modified_distance(a, a) == 0.0


def test_hausdorff_between_nested_segments():
    a = _segment(0.0, 1.0)
    b = _segment(0.0, 1.1)
    assert hausdorff_distance(a, b) == pytest.approx(0.1, abs=1e-9)
    assert hausdorff_distance(a, b) == hausdorff_distance(b, a)


def test_modified_distance_never_exceeds_hausdorff():
    a = _segment(0.0, 1.0)
    for hi in (1.02, 1.05, 1.2):
        b = _segment(0.0, hi)
        assert modified_distance(a, b) <= hausdorff_distance(a, b) + 1e-12


def test_empty_snapshot_is_rejected():
    empty = DomainSnapshot(0.0, np.zeros((0, 1)), np.zeros((0, 1)), np.zeros((0, 1)), 0.1)
    with pytest.raises(InvalidInputError):
        hausdorff_distance(empty, _segment(0.0, 1.0))


def test_interior_shrink_empties_past_the_inradius():
    g = _segment(0.0, 1.0)
    shrunk = interior_shrink(g, 0.2)
    assert not shrunk.flagged_empty
    assert np.all(shrunk.all_points() >= 0.2 - 1e-12)
    assert np.all(shrunk.all_points() <= 0.8 + 1e-12)
    gone = interior_shrink(g, 0.6)
    assert gone.flagged_empty
    assert gone.is_empty


def test_interior_shrink_rejects_negative_delta():
    with pytest.raises(InvalidInputError):
        interior_shrink(_segment(0.0, 1.0), -0.1)


def test_interior_ball_on_disk(unit_disk):
    snap = unit_disk.snapshot(0.0, 0.05)
    assert check_interior_ball(snap, 0.25)


def test_interior_ball_fails_when_radius_exceeds_interval():
    snap = MovingDomain(IntervalDomain(1.0), IdentityLaw(1), 1.0).snapshot(0.0, 0.01)
    assert check_interior_ball(snap, 0.3)
    assert not check_interior_ball(snap, 2.0)


def test_speed_bound_holds_for_static_family(unit_interval):
    times = np.linspace(0.0, 1.0, 5)
    assert check_speed_bound(unit_interval, 2.0, times, 0.05)


def test_speed_bound_rejects_E_below_one(unit_interval):
    with pytest.raises(InvalidInputError):
        check_speed_bound(unit_interval, 0.5, [0.0, 1.0], 0.05)


def test_cone_membership_axis_and_outside():
    X = np.array([[0.1, 0.0], [0.0, 0.1], [0.3, 0.0], [0.1, 0.01]])
    inside = cone_membership(X, (0.0, 0.0), (1.0, 0.0), 0.2, math.pi / 6)
    assert inside.tolist() == [True, False, False, True]


def test_lipschitz_cone_points_are_members():
    cone = lipschitz_cone((0.0, 0.0), (0.0, 1.0), 0.2, math.pi / 6, spacing=0.01)
    assert cone.interior_points.shape[0] > 0
    assert np.all(cone_membership(cone.interior_points, (0.0, 0.0), (0.0, 1.0), 0.2, math.pi / 6))


def test_lipschitz_certificate_on_disk(unit_disk):
    snap = unit_disk.snapshot(0.0, 0.02)
    assert certify_lipschitz(snap, 0.2, math.pi / 6)


def test_pullback_jacobians_identity(unit_disk):
    J, H, rho_t = pullback_jacobians(unit_disk, 0.5, [[0.1, 0.2], [0.0, -0.3]])
    assert np.allclose(J, np.eye(2))
    assert np.allclose(H, 0.0)
    assert np.allclose(rho_t, 0.0)


def test_pullback_jacobians_rejects_time_outside_horizon(unit_disk):
    with pytest.raises(OutOfDomainError):
        pullback_jacobians(unit_disk, 1.5, [[0.0, 0.0]])


def test_pullback_jacobians_rejects_point_outside_reference(unit_disk):
    with pytest.raises(OutOfDomainError):
        pullback_jacobians(unit_disk, 0.5, [[2.0, 0.0]])


def test_dilation_jacobians_match_closed_form():
    dom = MovingDomain(IntervalDomain(1.0), DilationLaw(0.5, (0.0,)), 1.0)
    J, _, rho_t = dom.jacobians(1.0, [[0.4]])
    assert J[0, 0, 0] == pytest.approx(1.0 / 1.5)
    assert rho_t[0, 0] == pytest.approx(-0.5 * 0.4 / 1.5)


def test_endpoint_law_moves_right_end_only():
    law = EndpointLaw(1.0, [("linear", 0.2)], 1.0)
    dom = MovingDomain(IntervalDomain(1.0), law, 1.0)
    assert law.endpoint(1.0) == pytest.approx(1.2)
    assert dom.tau(1.0, [[0.0]])[0, 0] == 0.0
    assert dom.tau(1.0, [[1.0]])[0, 0] == pytest.approx(1.2)
    info = dom.validate(np.linspace(0.0, 1.0, 5), 0.05)
    assert info["roundtrip_error"] < 1e-12
    assert info["speed_bounded"]


def test_endpoint_law_rejects_collapsing_interval():
    with pytest.raises(InvalidInputError):
        EndpointLaw(1.0, [("linear", -1.5)], 1.0)


def test_radial_law_boundary_radius():
    law = RadialFourierLaw(1.0, (0.0, 0.0), [(2, 0.1, 0.0)], 1.0)
    dom = MovingDomain(disk(1.0), law, 1.0)
    X = dom.tau(1.0, [[1.0, 0.0], [0.0, 1.0]])
    assert np.linalg.norm(X[0]) == pytest.approx(1.1)
    assert np.linalg.norm(X[1]) == pytest.approx(0.9)
    assert law.boundary_radius(1.0, 0.0) == pytest.approx(1.1)


def test_generic_inverse_map_round_trips():
    law = WaveLaw(0.1, 2.0, 1.0)
    Y = np.array([[0.2, -0.3], [0.5, 0.1]])
    X = law.tau(0.7, Y)
    assert np.allclose(law.rho(0.7, X), Y, atol=1e-10)


def test_wave_law_rejects_fold():
    with pytest.raises(InvalidInputError):
        WaveLaw(0.6, 2.0, 1.0)


def test_star_domain_fixed_boundary_arc():
    star = StarDomain(r0=1.0, harmonics=((3, 0.1, 0.0),), gamma_arc=(-0.5, 0.5))
    pts = np.array([[1.1, 0.0], [-0.9, 0.0]])
    assert star.fixed_boundary(pts).tolist() == [True, False]
    assert star.sdf(np.array([[0.0, 0.0]]))[0] < 0


def test_moving_domain_rejects_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        MovingDomain(disk(1.0), IdentityLaw(1), 1.0)


def test_distance_ratio_sweep_reports_ratio():
    base = _segment(0.0, 1.0)
    rows = distance_ratio_sweep(base, [_segment(0.0, 1.05), _segment(0.0, 1.1)])
    assert len(rows) == 2
    for d, dm, ratio in rows:
        assert d >= dm > 0
        assert ratio == pytest.approx(d / dm)


# ---------- distances against closed forms ----------
def test_hausdorff_between_shifted_disks():
    a = MovingDomain(disk(1.0), IdentityLaw(2), 1.0).snapshot(0.0, 0.03)
    b = MovingDomain(disk(1.0, center=(0.3, 0.0)), IdentityLaw(2), 1.0).snapshot(0.0, 0.03)
    assert hausdorff_distance(a, b) == pytest.approx(0.3, abs=0.03)
    assert modified_distance(a, b) == pytest.approx(0.3, abs=0.03)


def test_distances_between_concentric_disks():
    inner = MovingDomain(disk(1.0), IdentityLaw(2), 1.0).snapshot(0.0, 0.04)
    outer = MovingDomain(disk(2.0), IdentityLaw(2), 1.0).snapshot(0.0, 0.04)
    assert hausdorff_distance(inner, outer) == pytest.approx(1.0, abs=0.05)
    assert modified_distance(inner, outer) == pytest.approx(1.0, abs=0.05)


def test_interior_shrink_of_unit_disk_is_the_smaller_disk(unit_disk):
    h = 0.02
    snap = unit_disk.snapshot(0.0, h)
    shrunk = interior_shrink(snap, 0.25)
    radii = np.linalg.norm(shrunk.all_points(), axis=1)
    assert not shrunk.flagged_empty
    assert 0.75 - 2 * h <= radii.max() <= 0.75 + 1e-3
    target = MovingDomain(disk(0.75), IdentityLaw(2), 1.0).snapshot(0.0, h)
    assert hausdorff_distance(shrunk, target) <= 2 * h


# ---------- interior ball on a polygon ----------
LSHAPE_CONVEX = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 2.0], [0.0, 2.0]])


@pytest.mark.parametrize("R0", [0.5, 0.2])
def test_lshape_interior_ball_fails_only_at_convex_vertices(R0):
    h = 0.02
    snap = MovingDomain(LShapeDomain(1.0), IdentityLaw(2), 1.0).snapshot(0.0, h)
    assert not check_interior_ball(snap, R0)
    bad = interior_ball_failures(snap, R0)
    assert bad.shape[0] > 0
    to_convex = np.min(np.linalg.norm(bad[:, None, :] - LSHAPE_CONVEX[None, :, :], axis=2), axis=1)
    assert np.all(to_convex < R0 + 2 * h)
    assert np.all(np.linalg.norm(bad - np.array([1.0, 1.0]), axis=1) > 0.1)


def test_interior_ball_failures_empty_on_disk(unit_disk):
    assert interior_ball_failures(unit_disk.snapshot(0.0, 0.05), 0.25).shape[0] == 0


# ---------- speed bound ----------
@pytest.mark.parametrize("E", [1.0, 2.0, 4.0, 8.0, 16.0])
def test_speed_bound_fails_for_a_growing_jump(E):
    family = MovingDomain(IntervalDomain(1.0), EndpointLaw(1.0, [("jump", 0.5)], 1.0), 1.0)
    times = np.linspace(0.0, 1.0, 8)
    assert not check_speed_bound(family, E, times, 0.01)
    report = speed_bound_report(family, E, times, 0.01)
    assert report["failure"]["t"] < 0.5 <= report["failure"]["t0"]


def test_translation_speed_constant_grows_with_velocity():
    candidates = (1.0, 1.25, 1.5, 1.75, 2.5, 3.0)
    times = np.linspace(0.0, 1.0, 11)
    found = [
        minimal_speed_constant(MovingDomain(IntervalDomain(1.0), TranslationLaw((v,)), 1.0),
                               candidates, times, 0.01)
        for v in (0.1, 1.0, 4.0)
    ]
    assert found == [1.25, 1.5, 2.5]
    assert found[0] < found[1] < found[2]


def test_speed_bound_without_a_fitting_ball_is_inconclusive(unit_interval):
    report = speed_bound_report(unit_interval, 1.0, [0.0, 1.0], 0.05, radii=[0.6])
    assert report["tested"] == 0
    assert not report["passed"]
    assert not check_speed_bound(unit_interval, 1.0, [0.0, 1.0], 0.05, radii=[0.6])


def test_speed_bound_report_counts_tested_balls(unit_interval):
    report = speed_bound_report(unit_interval, 2.0, np.linspace(0.0, 1.0, 3), 0.05)
    assert report["passed"]
    assert report["tested"] > 0
    assert report["failure"] is None


# ---------- cones and jacobians ----------
def test_cone_membership_matches_brute_force(rng):
    X = rng.uniform(-0.3, 0.3, size=(1000, 2))
    x0 = np.array([0.05, -0.02])
    zeta = np.array([1.0, 1.0]) / math.sqrt(2.0)
    rho0, alpha = 0.25, math.pi / 5
    d = X - x0
    r = np.linalg.norm(d, axis=1)
    angle = np.arccos(np.clip((d @ zeta) / r, -1.0, 1.0))
    expected = (r < rho0) & (angle < alpha)
    got = cone_membership(X, x0, zeta, rho0, alpha)
    assert got.tolist() == expected.tolist()
    assert 0 < int(expected.sum()) < 1000


def test_nonradial_jacobians_converge_at_second_order():
    family = MovingDomain(disk(1.0), WaveLaw(0.1, 2.0, 1.0), 1.0)
    y = np.array([[0.3, -0.2]])
    H = [pullback_jacobians(family, 1.0, y, step=s)[1] for s in (0.05, 0.025, 0.0125)]
    ratio = np.max(np.abs(H[0] - H[1])) / np.max(np.abs(H[1] - H[2]))
    assert 3.0 <= ratio <= 5.0

    J = pullback_jacobians(family, 1.0, y)[0][0]
    x = family.tau(1.0, y)[0]

    def central(h):
        cols = [(family.rho(1.0, x + h * e) - family.rho(1.0, x - h * e))[0] / (2 * h) for e in np.eye(2)]
        return np.stack(cols, axis=1)

    errors = [np.max(np.abs(central(h) - J)) for h in (0.04, 0.02)]
    assert errors[0] < 1e-2
    assert 3.0 <= errors[0] / errors[1] <= 5.0
