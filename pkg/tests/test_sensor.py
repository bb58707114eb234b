import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capservo.limb import build_limb
from capservo.sensor import (
    CalibrationError,
    CalibrationProfile,
    CapacitanceModel,
    RehearsalTrace,
    SampleWindow,
    WindowNotWarmError,
    calibrate,
    normalize,
    normalize_mean,
    raw_capacitance,
)
from capservo.sim import calibrate_for, record_rehearsal

MODEL = CapacitanceModel()
QUIET = MODEL.noiseless()


def _flat_patch(x, height, n=3, half=0.01):
    """An n*n grid of points parallel to the top of a cylinder at the given height."""
    a = np.linspace(-half, half, n)
    xs, ys = np.meshgrid(x + a, a, indexing="ij")
    return np.stack([xs.ravel(), ys.ravel(), np.full(xs.size, height)], axis=-1)


def test_far_asymptote():
    assert QUIET.law(1e6) == pytest.approx(MODEL.c_far, abs=1e-3)


def test_gap_equal_to_decay_length_gives_half_gain():
    limb = build_limb(0.10, 0.10, 0.40)
    # a 3x3 patch wider than a point is not a flat wall on a cylinder, so use a line along the axis
    pts = np.stack([np.linspace(0.15, 0.25, 9), np.zeros(9), np.full(9, 0.05 + 0.01)], axis=-1)
    raw = raw_capacitance(QUIET, pts, limb, shell=0.0, foam=0.02)
    assert raw == pytest.approx(MODEL.c_far + MODEL.c_gain / 2)


def test_requires_nine_points():
    limb = build_limb(0.10, 0.10, 0.40)
    with pytest.raises(ValueError):
        raw_capacitance(QUIET, _flat_patch(0.2, 0.07)[:8], limb, 0.0, 0.02)


def test_noise_needs_seeded_generator_and_is_deterministic():
    limb = build_limb(0.10, 0.10, 0.40)
    pts = _flat_patch(0.2, 0.07)
    with pytest.raises(ValueError):
        raw_capacitance(MODEL, pts, limb, 0.0, 0.02)
    a = raw_capacitance(MODEL, pts, limb, 0.0, 0.02, rng=np.random.default_rng(5))
    b = raw_capacitance(MODEL, pts, limb, 0.0, 0.02, rng=np.random.default_rng(5))
    assert a == b


def test_pressure_sweep_plateaus():
    p = np.linspace(0.0, 2 * MODEL.plateau_pressure, 41)
    raw = QUIET.law(np.zeros_like(p), p)
    assert np.all(np.diff(raw) >= 0)
    assert abs(raw[-1] - raw[-2]) <= 0.01 * raw[-1]


@settings(max_examples=300, deadline=None)
@given(d1=st.floats(1e-6, 1.0), d2=st.floats(1e-6, 1.0), p=st.floats(0.0, 5.0))
def test_law_monotone_in_gap_and_contact_dominates(d1, d2, p):
    lo, hi = sorted((d1, d2))
    assert QUIET.law(lo) >= QUIET.law(hi)
    if hi > lo:
        assert QUIET.law(lo) > QUIET.law(hi)
    assert QUIET.law(0.0, p) > QUIET.law(lo)


def test_window_needs_five_samples():
    w = SampleWindow(2)
    for i in range(4):
        w.push([i, i])
        with pytest.raises(WindowNotWarmError):
            w.mean()
    w.push([4, 4])
    assert w.warm and len(w) == 5
    assert w.mean().tolist() == [2.0, 2.0]
    w.push([10, 10])
    assert len(w) == 5
    assert w.mean().tolist() == [4.0, 4.0]


def test_window_rejects_wrong_width():
    with pytest.raises(ValueError):
        SampleWindow(3).push([1.0, 2.0])


def _profile(kind="rigid"):
    n = 6 if kind == "rigid" else 8
    return CalibrationProfile(kind, np.full(n, 100.0), np.full(n, 220.0), np.full(n, 0.5))


@pytest.mark.parametrize(
    "samples, expected",
    [
        ([100.0] * 5, 0.0),
        ([220.0] * 5, 1.0),
        ([100.0, 100.0, 220.0, 220.0, 160.0], 0.5),
    ],
)
def test_normalize_examples(samples, expected):
    calib = _profile()
    w = SampleWindow(6)
    for s in samples:
        w.push(np.full(6, s))
    assert np.allclose(normalize(w, calib), expected)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=6, max_size=6))
def test_normalize_clamps(raw):
    out = normalize_mean(raw, _profile())
    assert np.all((out >= 0) & (out <= 1))


def test_profile_invariants():
    with pytest.raises(CalibrationError):
        CalibrationProfile("rigid", np.full(6, 1.0), np.full(6, 1.0), np.full(6, 0.5))
    with pytest.raises(CalibrationError):
        CalibrationProfile("rigid", np.zeros(6), np.ones(6), np.full(6, 1.0))
    with pytest.raises(CalibrationError):
        CalibrationProfile("soft", np.zeros(6), np.ones(6), np.full(6, 0.5))


def test_profile_round_trip(tmp_path):
    calib = _profile("soft")
    calib.meta["limb"] = "arm"
    path = tmp_path / "calib.json"
    calib.save(path)
    back = CalibrationProfile.load(path)
    assert back.to_dict() == calib.to_dict()
    assert back.s2 == 0.5 and back.s1.shape == (6,)


def test_constant_trace_rejected():
    seg = np.full((5, 6), 150.0)
    with pytest.raises(CalibrationError):
        calibrate(RehearsalTrace("rigid", far=seg, tight=seg, comfort=seg))


@pytest.mark.parametrize("missing", ["far", "tight", "comfort"])
def test_trace_missing_segment(missing):
    seg = np.full((5, 6), 150.0)
    parts = {"far": seg - 40, "tight": seg + 40, "comfort": seg}
    parts[missing] = None
    with pytest.raises(CalibrationError, match=missing):
        calibrate(RehearsalTrace("rigid", **parts))


@pytest.mark.parametrize("kind", ["soft", "rigid"])
def test_rehearsal_thresholds_inside_unit_interval(kind):
    limb = build_limb(0.10, 0.10, 0.40)
    trace = record_rehearsal(kind, limb, MODEL)
    calib = calibrate(trace)
    assert np.all((calib.thresholds > 0) & (calib.thresholds < 1))
    assert np.all(calib.c_max > calib.c_min)


@pytest.mark.parametrize("kind", ["soft", "rigid"])
def test_profiles_differ_between_limb_sizes(kind):
    small = calibrate_for(kind, build_limb(0.08, 0.08, 0.35), MODEL)
    large = calibrate_for(kind, build_limb(0.16, 0.16, 0.35), MODEL)
    assert not np.allclose(small.thresholds, large.thresholds)
    for calib in (small, large):
        assert np.all((calib.thresholds > 0) & (calib.thresholds < 1))
