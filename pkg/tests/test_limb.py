import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capservo import geometry
from capservo.limb import (
    CreamRing,
    LimbValidationError,
    UndefinedCoverageError,
    ViewPartition,
    apply_cream_rings,
    build_grid,
    build_limb,
    coverage_report,
    signed_distance,
    validate_rings,
)


def test_cylinder_radius_constant():
    limb = build_limb(0.10, 0.10, 0.30)
    assert np.allclose(limb.radius(np.linspace(0, 1, 11)), 0.05)


def test_frustum_midpoint_radius():
    assert build_limb(0.14, 0.10, 0.40).radius(0.5) == pytest.approx(0.06)


def test_lateral_area_and_grid_sum():
    limb = build_limb(0.16, 0.16, 0.30)
    assert limb.lateral_area() == pytest.approx(math.pi * 0.16 * 0.30)
    assert build_grid(limb).area.sum() == pytest.approx(0.150796, rel=1e-5)


@pytest.mark.parametrize("n", [64, 128, 256])
def test_tapered_grid_area_matches_closed_form(n):
    limb = build_limb(0.15, 0.08, 0.37)
    r0, r1 = 0.04, 0.075
    analytic = math.pi * (r0 + r1) * math.hypot(0.37, r1 - r0)
    assert build_grid(limb, n, n).area.sum() == pytest.approx(analytic, rel=1e-3)


@pytest.mark.parametrize(
    "args, field",
    [
        ((0.21, 0.10, 0.3), "base_diameter"),
        ((0.10, 0.05, 0.3), "tip_diameter"),
        ((0.10, 0.10, -0.3), "length"),
        ((0.10, 0.12, 0.3), "tip_diameter"),
    ],
)
def test_out_of_envelope_names_field(args, field):
    with pytest.raises(LimbValidationError, match=field):
        build_limb(*args)


def test_signed_distance_examples():
    limb = build_limb(0.10, 0.10, 0.30)
    pts = np.array([[0.15, 0.0, 0.06], [0.15, 0.0, 0.0], [0.15, 0.05, 0.0]])
    assert np.allclose(signed_distance(limb, pts), [0.01, -0.05, 0.0])


def test_signed_distance_respects_axis_pose():
    pose = geometry.transform(geometry.rot_z(0.7), (0.2, -0.1, 0.5))
    limb = build_limb(0.12, 0.08, 0.3, axis_pose=pose)
    u = np.array([0.1, 0.5, 0.9])
    phi = np.array([0.0, 2.0, -1.0])
    assert np.allclose(signed_distance(limb, limb.surface_point(u, phi)), 0.0, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    u=st.floats(0.1, 0.9),
    phi=st.floats(-math.pi, math.pi),
    h=st.floats(-0.02, 0.05),
    tip=st.floats(0.06, 0.20),
    grow=st.floats(0.0, 0.08),
)
def test_signed_distance_along_surface_normal(u, phi, h, tip, grow):
    base = min(0.20, tip + grow)
    limb = build_limb(base, tip, 0.35)
    # outward normal of a frustum tilts back by the half-angle of the cone
    slope = (limb.base_radius - limb.tip_radius) / limb.length
    n = np.array([-slope, math.sin(phi), math.cos(phi)]) / math.hypot(1.0, slope)
    p = limb.surface_point(u, phi) + h * n
    if h > -limb.tip_radius / 2:
        assert signed_distance(limb, p) == pytest.approx(h, abs=1e-9)


def test_zero_rings_make_coverage_undefined():
    limb = build_limb(0.10, 0.10, 0.30)
    grid = apply_cream_rings(build_grid(limb), limb, [])
    assert grid.creamed_area == 0.0
    with pytest.raises(UndefinedCoverageError):
        coverage_report(grid, grid.copy())


def test_ten_percent_ring_row_count():
    limb = build_limb(0.10, 0.10, 0.40)
    grid = apply_cream_rings(build_grid(limb, 100, 32), limb, [CreamRing(0.5, 0.04)])
    rows = (grid.initial_mass > 0).any(axis=1).sum()
    assert abs(rows - 10) <= 1


def test_three_rings_area_against_band_formula():
    limb = build_limb(0.10, 0.10, 0.40)
    grid = apply_cream_rings(build_grid(limb), limb, [CreamRing(u, 0.04) for u in (0.3, 0.5, 0.7)])
    band = 3 * (2 * math.pi * 0.05 * 0.04)
    row = 2 * math.pi * 0.05 * 0.40 / 128
    # each ring edge may add at most one partially covered row
    assert band <= grid.creamed_area <= band + 6 * row


def test_rings_validated():
    limb = build_limb(0.10, 0.10, 0.40)
    with pytest.raises(LimbValidationError, match="overlap"):
        validate_rings([CreamRing(0.5, 0.04), CreamRing(0.55, 0.04)], limb)
    with pytest.raises(LimbValidationError):
        validate_rings([CreamRing(0.02, 0.04)], limb)


def _creamed(limb, n_axial=128, n_circ=96):
    return apply_cream_rings(build_grid(limb, n_axial, n_circ), limb, [CreamRing(u, 0.04) for u in (0.3, 0.5, 0.7)])


def test_report_identity_and_full_clean():
    limb = build_limb(0.12, 0.09, 0.35)
    before = _creamed(limb)
    zero = coverage_report(before, before.copy())
    assert (zero.top, zero.side, zero.bottom, zero.total) == (0.0, 0.0, 0.0, 0.0)
    after = before.copy()
    after.cream_mass[:] = 0.0
    full = coverage_report(before, after)
    assert full.top == full.side == full.bottom == pytest.approx(100.0)
    assert full.total == pytest.approx(100.0)


def test_top_view_only_cleaned():
    limb = build_limb(0.10, 0.10, 0.40)
    before = _creamed(limb)
    after = before.copy()
    top = ViewPartition().label(before.phi_centers) == 0
    after.cream_mass[:, top] = 0.0
    rep = coverage_report(before, after)
    assert rep.top == pytest.approx(100.0)
    assert rep.bottom == 0.0 and rep.side == 0.0
    # top is a third of the circumference on a uniform grid
    assert rep.total == pytest.approx(100.0 / 3)


def test_cleaned_threshold_is_one_percent():
    limb = build_limb(0.10, 0.10, 0.40)
    before = _creamed(limb)
    after = before.copy()
    after.cream_mass *= 0.0101
    assert coverage_report(before, after).total == 0.0
    after.cream_mass = before.cream_mass * 0.0099
    assert coverage_report(before, after).total == pytest.approx(100.0)


def test_view_partition_boundaries():
    v = ViewPartition()
    deg = np.radians([0, 59.999, 60, 119.999, 120, 180, -120, -120.001, -60, -60.001])
    assert v.label(deg).tolist() == [0, 0, 1, 1, 2, 2, 1, 2, 0, 1]
    assert sum(v.measures()) == pytest.approx(2 * math.pi)


@settings(max_examples=50, deadline=None)
@given(top=st.floats(5, 100), side=st.floats(5, 70))
def test_view_measures_cover_circle(top, side):
    if top + side >= 180:
        with pytest.raises(ValueError):
            ViewPartition(top, side)
        return
    v = ViewPartition(top, side)
    assert sum(v.measures()) == pytest.approx(2 * math.pi)
    phi = np.linspace(-math.pi, math.pi, 3601)[:-1]
    counts = np.bincount(v.label(phi), minlength=3) / len(phi)
    assert np.allclose(counts, np.array(v.measures()) / (2 * math.pi), atol=1e-3)


def test_coverage_refinement_stable():
    limb = build_limb(0.13, 0.09, 0.40)

    def report(n):
        before = _creamed(limb, n, n)
        after = before.copy()
        u, phi = np.meshgrid(before.u_centers, before.phi_centers, indexing="ij")
        # a smooth cleaned region that does not follow cell edges
        cleaned = np.cos(phi) > -0.3 + 0.4 * u
        after.cream_mass[cleaned] = 0.0
        return coverage_report(before, after)

    coarse, fine = report(64), report(256)
    for k in ("top", "side", "bottom", "total"):
        assert abs(getattr(coarse, k) - getattr(fine, k)) < 1.0
