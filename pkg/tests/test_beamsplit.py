import csv
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from nbaomp.beamsplit import (array_gain_direct, array_gain_sinc, dirichlet, eta, gain_map,
                              image_curvature, peak_on_polar_grid, physical_from_spatial,
                              spatial_from_physical, split_deltas, subcarrier_image,
                              write_gain_map)
from nbaomp.channel import OfdmGrid
from nbaomp.errors import ContractError, DomainError
from nbaomp.geometry import ArrayConfig, PolarPoint, fresnel_steering, steering_vector

BIG = ArrayConfig(256, 300e9)
USER = PolarPoint(math.sin(math.pi / 4), 6.0)


def test_eta_values():
    assert eta(300e9, 300e9) == 1.0
    assert eta(300e9, 310e9) == pytest.approx(0.967742, abs=1e-6)
    # The band edge of the 128-subcarrier grid: 300 / 285.1171875.
    assert eta(300e9, 300e9 - 30e9 / 128 * 63.5) == pytest.approx(1.052196, rel=1e-5)
    with pytest.raises(DomainError):
        eta(300e9, 0.0)


def test_spatial_image_examples():
    p = spatial_from_physical(PolarPoint(0.7071, 6.0), 300 / 310)
    assert p.phi == pytest.approx(0.684286, abs=1e-5)
    assert p.range_m == pytest.approx(6.5936, abs=1e-4)
    q = spatial_from_physical(PolarPoint(0.0, 10.0), 1.05)
    assert (q.phi, q.range_m) == pytest.approx((0.0, 10 / 1.05))
    same = spatial_from_physical(PolarPoint(0.4, 3.0), 1.0)
    assert (same.phi, same.range_m) == pytest.approx((0.4, 3.0), rel=1e-15)


def test_physical_from_spatial_example():
    p = physical_from_spatial(PolarPoint(0.684290, 6.59353), 300 / 310)
    assert p.phi == pytest.approx(0.7071, abs=1e-5)
    assert p.range_m == pytest.approx(6.0, abs=1e-4)
    same = physical_from_spatial(PolarPoint(-0.2, 7.0), 1.0)
    assert (same.phi, same.range_m) == pytest.approx((-0.2, 7.0), rel=1e-15)


def test_mapping_domain_errors():
    with pytest.raises(DomainError):
        spatial_from_physical(PolarPoint(1.0, 5.0), 0.99)
    with pytest.raises(DomainError):
        spatial_from_physical(PolarPoint(0.98, 5.0), 1.05)
    with pytest.raises(DomainError):
        physical_from_spatial(PolarPoint(0.99, 5.0), 0.95)


@given(st.floats(-0.94, 0.94), st.floats(0.1, 50.0), st.floats(0.95, 1.05))
def test_mapping_round_trip(phi, r, e):
    p = PolarPoint(phi, r)
    back = physical_from_spatial(spatial_from_physical(p, e), e)
    assert back.phi == pytest.approx(phi, abs=1e-12)
    assert back.range_m == pytest.approx(r, rel=1e-12)
    fwd = spatial_from_physical(physical_from_spatial(p, e), e)
    assert fwd.range_m == pytest.approx(r, rel=1e-12)


@given(st.floats(-0.94, 0.94), st.floats(0.1, 50.0), st.floats(0.95, 1.05),
       st.sampled_from(["forward", "inverse"]))
def test_curvature_form_agrees_with_polar_form(phi, r, e, orient):
    p = PolarPoint(phi, r)
    img = subcarrier_image(p, e, orient)
    phi2, zeta2 = image_curvature(phi, p.zeta, e, orient)
    assert phi2 == pytest.approx(img.phi, abs=1e-14)
    assert zeta2 == pytest.approx(img.zeta, rel=1e-10, abs=1e-15)


def test_unknown_orientation():
    with pytest.raises(ValueError):
        subcarrier_image(USER, 1.01, "sideways")
    with pytest.raises(ValueError):
        image_curvature(0.1, 0.1, 1.01, "sideways")


def test_split_deltas_examples():
    zero = split_deltas(PolarPoint(0.5, 10.0), 1.0)
    assert zero.delta_phi == 0 and zero.delta_r == pytest.approx(0.0, abs=1e-14)
    rep = split_deltas(PolarPoint(0.5, 10.0), 1.05, printed=True)
    assert rep.delta_phi == pytest.approx(0.025, abs=1e-12)
    assert rep.spatial.range_m == pytest.approx(9.19841, abs=1e-5)
    assert rep.delta_r == pytest.approx(-0.80159, abs=1e-5)
    assert rep.delta_r_printed == pytest.approx(0.4599, abs=1e-4)
    assert split_deltas(PolarPoint(0.5, 10.0), 1.05).delta_r_printed is None


def test_gain_of_matched_beam():
    u = steering_vector(BIG, USER, 300e9)
    assert array_gain_direct(u, u) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ContractError):
        array_gain_direct(u, u[:-1])


@given(st.floats(-0.94, 0.94), st.floats(0.5, 30.0), st.floats(285e9, 315e9))
def test_image_phase_cancellation(phi, r, f_m):
    # Fresnel beam at f_c toward p and Fresnel beam at f_m toward its image coincide.
    p = PolarPoint(phi, r)
    e = eta(300e9, f_m)
    assume(abs(e * phi) < 1)
    img = spatial_from_physical(p, e)
    u = steering_vector(BIG, p, 300e9, "fresnel")
    v = steering_vector(BIG, img, f_m, "fresnel")
    assert array_gain_direct(u, v) == pytest.approx(1.0, abs=1e-12)


def test_first_null_one_beamwidth_away():
    u = fresnel_steering(BIG, 0.7071, 0.0, 300e9)
    v = fresnel_steering(BIG, 0.7071 + 2 / 256, 0.0, 300e9)
    assert array_gain_direct(u, v) < 1e-6
    assert array_gain_sinc(BIG, 0.7071, 0.0, 0.7071 + 2 / 256, 0.0, 300e9, 300e9) < 1e-6


def test_dirichlet_special_values():
    assert dirichlet(0.0, 64) == 1.0
    assert abs(dirichlet(1 / 64, 64)) < 1e-14
    assert abs(dirichlet(1.0, 64)) == pytest.approx(1.0)
    assert dirichlet(np.array([0.0, 0.5]), 4).shape == (2,)


@given(st.floats(-1, 1), st.floats(-1.06, 1.06), st.floats(280e9, 320e9))
def test_sinc_matches_direct_sum_far_field(phi, phi_bar, f_m):
    u = fresnel_steering(BIG, phi, 0.0, 300e9)
    v = fresnel_steering(BIG, phi_bar, 0.0, f_m)
    direct = array_gain_direct(u, v)
    closed = array_gain_sinc(BIG, phi, 0.0, phi_bar, 0.0, 300e9, f_m)
    assert closed == pytest.approx(direct, rel=1e-9, abs=1e-12)


def _window(p, half):
    x, y = p.to_cartesian()
    return (x - half, x + half, y - half, y + half)


def _nearest(gm, p):
    x, y = p.to_cartesian()
    return float(gm.x[np.argmin(np.abs(gm.x - x))]), float(gm.y[np.argmin(np.abs(gm.y - y))])


def test_gain_map_matched_subcarrier_peaks_in_user_cell():
    # 0.15 m cells; the carrier Fresnel focus sits about 0.09 m short of the
    # exact spherical source, so finer cells split the two.
    gm = gain_map(BIG, OfdmGrid(300e9, 30e9, 3), USER, _window(USER, 1.5), (21, 21))
    peaks = gm.argmax_cells()
    assert peaks[1][:2] == _nearest(gm, USER)
    assert len({c[:2] for c in peaks}) == 3


def test_gain_map_fine_near_field_split_in_angle_and_range():
    grid = OfdmGrid(300e9, 30e9, 3)
    gm = gain_map(BIG, grid, USER, _window(USER, 1.5), (201, 201))
    peaks = [PolarPoint.from_cartesian(x, y) for x, y, _ in gm.argmax_cells()]
    images = [physical_from_spatial(USER, eta(300e9, f)) for f in grid.freqs_hz]
    assert peaks[1].phi == pytest.approx(USER.phi, abs=1e-3)
    assert abs(peaks[1].range_m - USER.range_m) < 0.1
    for m in (0, 2):
        assert peaks[m].phi == pytest.approx(images[m].phi, abs=1e-3)
        assert abs(peaks[m].range_m - images[m].range_m) < 0.3
        assert abs(peaks[m].range_m - USER.range_m) > 0.3
    assert peaks[0].range_m > USER.range_m > peaks[2].range_m


def test_gain_map_far_field_split_is_angular_only():
    far = PolarPoint(USER.phi, 6000.0)
    grid = OfdmGrid(300e9, 30e9, 3)
    gm = gain_map(BIG, grid, far, _window(far, 400.0), (81, 81))
    peaks = [PolarPoint.from_cartesian(x, y) for x, y, _ in gm.argmax_cells()]
    assert len({(round(p.phi, 6), round(p.range_m, 3)) for p in peaks}) == 3
    cell_dphi = 800 / 80 / 6000
    for m, f in enumerate(grid.freqs_hz):
        assert peaks[m].phi == pytest.approx(USER.phi / eta(300e9, f), abs=cell_dphi)
    # Along the imaged ray the gain barely changes with range.
    phi_ray = USER.phi / eta(300e9, 310e9)
    ranges = np.linspace(5600, 6400, 9)
    zeta = (1 - phi_ray ** 2) / (2 * ranges)
    u = steering_vector(BIG, far, 310e9)
    g = [array_gain_direct(u, fresnel_steering(BIG, phi_ray, z, 300e9)) for z in zeta]
    assert max(g) - min(g) < 1e-4


def test_gain_map_window_validation():
    grid = OfdmGrid(300e9, 30e9, 3)
    with pytest.raises(DomainError):
        gain_map(BIG, grid, USER, (10, 11, 10, 11), (5, 5))
    with pytest.raises(DomainError):
        gain_map(BIG, grid, USER, (5, 4, 3, 6), (5, 5))


def test_gain_map_csv(tmp_path):
    grid = OfdmGrid(300e9, 30e9, 3)
    gm = gain_map(BIG, grid, USER, _window(USER, 1.0), (5, 4))
    path = tmp_path / "map.csv"
    write_gain_map(gm, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["x_m", "y_m", "gain_m1", "gain_m2", "gain_m3", "composite"]
    assert len(rows) == 1 + 20
    vals = np.array(rows[1:], dtype=float)
    assert np.allclose(vals[:, 5], vals[:, 2:5].mean(axis=1))
    peaks = list(csv.DictReader((tmp_path / "map_argmax.csv").open()))
    assert [int(r["subcarrier"]) for r in peaks] == [1, 2, 3]


@pytest.mark.parametrize("phi,r,f_m", [(0.3, 1.0, 285e9), (-0.6, 0.5, 315e9), (0.0, 1.8, 292e9)])
def test_gain_peak_follows_inverse_image(phi, r, f_m):
    cfg = ArrayConfig(64, 300e9)
    p = PolarPoint(phi, r)
    img = physical_from_spatial(p, eta(300e9, f_m))
    phi_grid = np.arange(-1, 1 + 1e-12, 1 / (4 * 64))
    zeta_grid = np.linspace(0, 1 / (2 * 0.2), 200)
    i, j, _ = peak_on_polar_grid(cfg, p, f_m, phi_grid, zeta_grid)
    ip = np.argmin(np.abs(phi_grid - img.phi))
    assert abs(i - ip) <= 1
    # Range resolution is coarse: require the peak curvature within a few cells.
    jz = np.argmin(np.abs(zeta_grid - img.zeta))
    assert abs(j - jz) <= 3
