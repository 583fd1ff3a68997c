import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vehinspect.orientation import (
    Alignment,
    BinaryMask,
    OrientationEstimate,
    TooFewPixelsError,
    check_alignment,
    estimate_orientation,
    logo_reading,
    rasterize_disk,
    rasterize_rectangle,
)


def test_axis_aligned_bar():
    bits = np.zeros((20, 40), dtype=bool)
    bits[9:11, 5:35] = True
    est = estimate_orientation(BinaryMask(bits))
    assert est.angle_deg == pytest.approx(0.0, abs=1e-12)
    assert est.reliable


def test_vertical_bar_reports_90():
    bits = np.zeros((40, 20), dtype=bool)
    bits[5:35, 9:11] = True
    assert estimate_orientation(BinaryMask(bits)).angle_deg == pytest.approx(90.0)


def test_diagonal_line():
    bits = np.eye(30, dtype=bool)
    # rows grow downward, so the main diagonal reads as +45
    assert estimate_orientation(BinaryMask(bits)).angle_deg == pytest.approx(45.0)


def test_disk_unreliable():
    est = estimate_orientation(rasterize_disk(64, 64, 20))
    assert not est.reliable
    assert est.eccentricity < 0.05
    assert check_alignment(est) is Alignment.UNRELIABLE


def test_too_few_pixels():
    bits = np.zeros((10, 10), dtype=bool)
    bits[0, :5] = True
    with pytest.raises(TooFewPixelsError):
        estimate_orientation(BinaryMask(bits))


def test_mask_validation():
    with pytest.raises(ValueError):
        BinaryMask(np.zeros((0, 4)))
    with pytest.raises(ValueError):
        BinaryMask(np.zeros(4))


def test_upsample_keeps_angle():
    m = rasterize_rectangle(80, 80, 50, 12, 17)
    a = estimate_orientation(m).angle_deg
    b = estimate_orientation(m.upsample(3)).angle_deg
    assert abs(a - b) < 1e-9


def test_check_alignment_boundaries():
    assert check_alignment(3.0) is Alignment.ALIGNED
    assert check_alignment(-3.0000001) is Alignment.MISALIGNED
    assert check_alignment(1.0, reliable=False) is Alignment.UNRELIABLE
    assert check_alignment(OrientationEstimate(10.0, 0.5, True), tolerance_deg=15) is Alignment.ALIGNED
    with pytest.raises(ValueError):
        check_alignment(0.0, tolerance_deg=-1)


def test_logo_reading_is_cached_and_accurate():
    assert logo_reading(12.0) is logo_reading(12.0)
    assert abs(logo_reading(12.0).angle_deg - 12.0) < 0.5
    assert check_alignment(logo_reading(0.0)) is Alignment.ALIGNED


@given(st.floats(-80, 80), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_angle_in_range_and_close(angle, dx, dy):
    m = rasterize_rectangle(200, 200, 140, 30, angle, center=(100 + dx, 100 + dy))
    est = estimate_orientation(m)
    assert -90 < est.angle_deg <= 90
    diff = (est.angle_deg - angle + 90) % 180 - 90
    assert abs(diff) < 1.0


@given(st.floats(-30, 30))
def test_transpose_reflects_angle(angle):
    m = rasterize_rectangle(160, 160, 120, 40, angle)
    a = estimate_orientation(m).angle_deg
    t = estimate_orientation(BinaryMask(m.bits.T)).angle_deg
    # transposing swaps axes: theta -> 90 - theta
    diff = (t - (90 - a) + 90) % 180 - 90
    assert math.isclose(diff, 0.0, abs_tol=1e-9)
