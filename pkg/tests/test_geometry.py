import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nbaomp.errors import DomainError
from nbaomp.geometry import (ArrayConfig, PolarPoint, exact_distance, exact_distances,
                             exact_steering_matrix, fraunhofer_distance, fresnel_distance,
                             fresnel_steering, steering_vector)

# Half a millimeter spacing, as in the hand-worked distance examples.
HAND = ArrayConfig(256, 300e9, element_spacing_m=0.5e-3)


def test_default_spacing_is_half_wavelength():
    cfg = ArrayConfig(64, 300e9)
    assert cfg.element_spacing_m == pytest.approx(cfg.wavelength_m / 2, rel=1e-15)
    assert cfg.aperture_m == pytest.approx(64 * cfg.element_spacing_m)
    assert ArrayConfig(64, 300e9, aperture="n-1").aperture_m == pytest.approx(
        63 * cfg.element_spacing_m)


@pytest.mark.parametrize("kwargs", [
    dict(n_antennas=1, carrier_freq_hz=300e9),
    dict(n_antennas=8, carrier_freq_hz=0.0),
    dict(n_antennas=8, carrier_freq_hz=300e9, element_spacing_m=-1e-3),
    dict(n_antennas=8, carrier_freq_hz=300e9, aperture="weird"),
])
def test_array_config_rejects_invalid(kwargs):
    with pytest.raises(DomainError):
        ArrayConfig(**kwargs)


def test_polar_point_rejects_nonpositive_range():
    with pytest.raises(DomainError):
        PolarPoint(0.1, 0.0)


def test_cartesian_round_trip():
    p = PolarPoint(math.sin(math.pi / 4), 6.0)
    x, y = p.to_cartesian()
    assert (x, y) == pytest.approx((6 / math.sqrt(2), 6 / math.sqrt(2)))
    q = PolarPoint.from_cartesian(x, y)
    assert q.phi == pytest.approx(p.phi, abs=1e-15)
    assert q.range_m == pytest.approx(6.0, rel=1e-15)


def test_first_antenna_sits_at_origin():
    p = PolarPoint(0.3, 4.2)
    assert exact_distance(HAND, p, 1) == pytest.approx(4.2, rel=1e-15)
    assert fresnel_distance(HAND, p, 1) == pytest.approx(4.2, rel=1e-15)


def test_exact_distance_broadside():
    assert exact_distance(HAND, PolarPoint(0.0, 6.0), 256) == pytest.approx(
        math.sqrt(36 + 0.1275 ** 2), rel=1e-12)
    assert exact_distance(HAND, PolarPoint(0.0, 6.0), 256) == pytest.approx(6.0013547, abs=5e-7)


def test_exact_distance_oblique_matches_oracle():
    p = PolarPoint(0.7071, 6.0)
    d = exact_distance(HAND, p, 256)
    assert d == pytest.approx(5.910533, abs=1e-6)
    # Independent oracle: planar Euclidean distance, array along the y axis.
    x, y = p.to_cartesian()
    assert d == pytest.approx(math.hypot(x, y - 0.1275), rel=1e-13)


def test_fresnel_distance_hand_value():
    p = PolarPoint(0.7071, 6.0)
    f = fresnel_distance(HAND, p, 256)
    assert f == pytest.approx(5.910522, abs=1e-6)
    assert abs(f - exact_distance(HAND, p, 256)) / f < 1e-4


@pytest.mark.parametrize("phi", [1.0, -1.0])
def test_fresnel_distance_endfire(phi):
    p = PolarPoint(phi, 3.0)
    assert fresnel_distance(HAND, p, 100) == pytest.approx(3.0 - phi * 99 * 0.5e-3, rel=1e-14)


def test_antenna_index_out_of_range():
    with pytest.raises(IndexError):
        exact_distance(HAND, PolarPoint(0.0, 1.0), 0)
    with pytest.raises(IndexError):
        fresnel_distance(HAND, PolarPoint(0.0, 1.0), 257)


def test_vectorized_distances_match_scalar():
    p = PolarPoint(-0.4, 2.5)
    vec = exact_distances(HAND, p)
    assert vec[[0, 10, 255]] == pytest.approx(
        [exact_distance(HAND, p, n) for n in (1, 11, 256)], rel=1e-14)


def test_broadside_far_field_steering_is_all_ones():
    cfg = ArrayConfig(64, 300e9)
    for mode in ("exact", "fresnel"):
        a = steering_vector(cfg, PolarPoint(0.0, 1e9), 310e9, mode)
        assert np.allclose(a, 1.0, atol=1e-6)


def test_exact_and_fresnel_agree_at_six_meters():
    cfg = ArrayConfig(256, 300e9)
    p = PolarPoint(0.7071, 6.0)
    a = steering_vector(cfg, p, 300e9, "exact")
    b = steering_vector(cfg, p, 300e9, "fresnel")
    assert abs(np.vdot(a, b)) / 256 >= 0.99


def test_fresnel_steering_matrix_columns():
    cfg = ArrayConfig(32, 300e9)
    phi = np.array([-0.5, 0.0, 0.8])
    zeta = np.array([0.01, 0.2, 0.0])
    mat = fresnel_steering(cfg, phi, zeta, 305e9)
    assert mat.shape == (32, 3)
    for q in range(3):
        assert np.allclose(mat[:, q], fresnel_steering(cfg, phi[q], zeta[q], 305e9))


def test_exact_steering_matrix_planar_column():
    cfg = ArrayConfig(16, 300e9)
    mat = exact_steering_matrix(cfg, [PolarPoint(0.3, math.inf), PolarPoint(0.3, 2.0)], 300e9)
    assert np.allclose(mat[:, 0], fresnel_steering(cfg, 0.3, 0.0, 300e9))
    assert np.allclose(mat[:, 1], steering_vector(cfg, PolarPoint(0.3, 2.0), 300e9))
    assert exact_steering_matrix(cfg, [], 300e9).shape == (16, 0)


def test_unknown_steering_mode():
    with pytest.raises(ValueError):
        steering_vector(ArrayConfig(4, 300e9), PolarPoint(0, 1), 300e9, "parabolic")


def test_fraunhofer_examples():
    big = ArrayConfig(256, 300e9)
    # 2 (N d)^2 / lambda = N^2 lambda / 2; exactly 32.768 m when lambda is 1 mm.
    assert fraunhofer_distance(big) == pytest.approx(256 ** 2 * big.wavelength_m / 2, rel=1e-14)
    assert fraunhofer_distance(ArrayConfig(256, 300e9, speed_of_light_m_s=3e8)) == pytest.approx(
        32.768, rel=1e-12)
    assert abs(fraunhofer_distance(big) - 32.76) / 32.76 < 1e-3
    small = ArrayConfig(2, 300e9)
    assert fraunhofer_distance(small) == pytest.approx(2 * small.wavelength_m, rel=1e-14)
    assert fraunhofer_distance(ArrayConfig(64, 300e9, speed_of_light_m_s=3e8)) == pytest.approx(
        2.048, rel=1e-12)


phis = st.floats(-1.0, 1.0)
ranges = st.floats(0.05, 100.0)
freqs = st.floats(200e9, 400e9)


@given(phis, ranges, freqs, st.sampled_from(["exact", "fresnel"]))
def test_steering_entries_have_unit_modulus(phi, r, f, mode):
    a = steering_vector(ArrayConfig(48, 300e9), PolarPoint(phi, r), f, mode)
    assert np.allclose(np.abs(a), 1.0, atol=1e-12)
    assert a[0] == pytest.approx(1.0)


@given(phis, st.floats(1.0, 100.0))
def test_fresnel_error_is_third_order(phi, r):
    # |exact - fresnel| is bounded by the cubic Taylor term x^3 / (2 r^2).
    cfg = ArrayConfig(64, 300e9)
    p = PolarPoint(phi, r)
    x = cfg.offsets_m[-1]
    err = abs(exact_distance(cfg, p, 64) - fresnel_distance(cfg, p, 64))
    assert err <= x ** 3 / (2 * r ** 2) * 1.01 + 1e-15


@given(phis, ranges)
def test_exact_distance_triangle_inequality(phi, r):
    p = PolarPoint(phi, r)
    d = exact_distances(HAND, p)
    x = HAND.offsets_m
    assert np.all(d <= r + x + 1e-12)
    assert np.all(d >= np.abs(r - x) - 1e-12)
