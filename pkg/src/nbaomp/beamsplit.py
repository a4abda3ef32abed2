"""Beam-split relations between physical and spatial locations, and array gains.

A beam designed at the carrier ``f_c`` toward a physical location ``(phi, r)``
focuses at subcarrier ``f_m`` on the spatial location

    phi_bar = eta * phi,   r_bar = (1 - eta^2 phi^2) / (eta (1 - phi^2)) * r,

with ``eta = f_c / f_m``. In curvature coordinates this is simply
``(phi, zeta) -> (eta * phi, eta * zeta)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from nbaomp import kernels
from nbaomp.channel import OfdmGrid
from nbaomp.errors import ContractError, DomainError
from nbaomp.geometry import ArrayConfig, PolarPoint, steering_vector

ORIENTATIONS = ("forward", "inverse")


def eta(f_c: float, f_m: float) -> float:
    """Proportional deviation ``f_c / f_m``."""
    if not f_m > 0 or not f_c > 0:
        raise DomainError("frequencies must be positive")
    return f_c / f_m


def spatial_from_physical(p: PolarPoint, eta_m: float) -> PolarPoint:
    if abs(p.phi) >= 1:
        raise DomainError("range map is singular at |phi| = 1")
    if abs(eta_m * p.phi) >= 1:
        raise DomainError(f"|eta * phi| = {abs(eta_m * p.phi):.6g} >= 1")
    phi_bar = eta_m * p.phi
    r_bar = (1 - phi_bar ** 2) / (eta_m * (1 - p.phi ** 2)) * p.range_m
    return PolarPoint(phi_bar, r_bar)


def physical_from_spatial(p_bar: PolarPoint, eta_m: float) -> PolarPoint:
    """Inverse of :func:`spatial_from_physical`."""
    phi = p_bar.phi / eta_m
    if abs(phi) >= 1:
        raise DomainError(f"|phi_bar / eta| = {abs(phi):.6g} >= 1")
    if abs(p_bar.phi) >= 1:
        raise DomainError("range map is singular at |phi_bar| = 1")
    r = eta_m * (1 - phi ** 2) / (1 - p_bar.phi ** 2) * p_bar.range_m
    return PolarPoint(phi, r)


def subcarrier_image(p: PolarPoint, eta_m: float, orientation: str) -> PolarPoint:
    """Where subcarrier ``m`` perceives ``p`` under the chosen mapping direction.

    ``forward`` applies the beam-focus map with ``eta``; ``inverse`` applies it
    with ``1 / eta``, i.e. returns the carrier-designed location whose beam
    focuses on ``p`` at ``f_m``.
    """
    if orientation == "forward":
        return spatial_from_physical(p, eta_m)
    if orientation == "inverse":
        return physical_from_spatial(p, eta_m)
    raise ValueError(f"orientation must be one of {ORIENTATIONS}")


def image_curvature(phi, zeta, eta_m, orientation: str):
    """:func:`subcarrier_image` in (phi, zeta) coordinates; vectorized and regular at |phi| = 1."""
    scale = eta_m if orientation == "forward" else 1.0 / eta_m
    if orientation not in ORIENTATIONS:
        raise ValueError(f"orientation must be one of {ORIENTATIONS}")
    if scale == 1.0:
        return phi, zeta
    return np.multiply(phi, scale), np.multiply(zeta, scale)


@dataclass(frozen=True)
class SplitReport:
    eta: float
    physical: PolarPoint
    spatial: PolarPoint
    delta_phi: float
    delta_r: float
    delta_r_printed: float | None = None


def split_deltas(p: PolarPoint, eta_m: float, printed: bool = False) -> SplitReport:
    """Angular and range beam split at one subcarrier.

    ``delta_r`` is ``r_bar - r`` from the range map. With ``printed=True`` the
    report also carries ``(eta - 1) * r_bar``, the alternative closed form,
    for comparison.
    """
    spatial = spatial_from_physical(p, eta_m)
    alt = (eta_m - 1) * spatial.range_m if printed else None
    return SplitReport(eta_m, p, spatial, spatial.phi - p.phi, spatial.range_m - p.range_m, alt)


def array_gain_direct(u: np.ndarray, v: np.ndarray) -> float:
    """``|u^H v|^2 / N^2`` for unit-modulus vectors of length N."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape or u.ndim != 1:
        raise ContractError(f"length mismatch: {u.shape} vs {v.shape}")
    n = u.shape[0]
    return float(abs(np.vdot(u, v)) ** 2 / n ** 2)


def dirichlet(a, n: int):
    """Normalized Dirichlet kernel ``sin(N pi a) / (N sin(pi a))``; 1 at integer ``a`` up to sign."""
    a = np.asarray(a, dtype=np.float64)
    den = n * np.sin(np.pi * a)
    num = np.sin(n * np.pi * a)
    small = np.abs(den) < 1e-12
    safe = np.where(small, 1.0, den)
    # Near an integer a0 the ratio tends to cos(N pi a0) / cos(pi a0) = +-1.
    limit = np.cos(n * np.pi * np.round(a)) / np.cos(np.pi * np.round(a))
    out = np.where(small, limit, num / safe)
    return float(out) if out.ndim == 0 else out


def array_gain_sinc(cfg: ArrayConfig, phi: float, zeta: float, phi_bar: float,
                    zeta_bar: float, f_c: float, f_m: float) -> float:
    """Closed-form gain ``|Sigma(d (f_m phi_bar - f_c phi) / c)|^2``.

    Only the linear phase terms enter the argument, so the value equals the
    direct sum only when the quadratic terms cancel (``f_m zeta_bar == f_c zeta``),
    e.g. in the far field where both curvatures vanish.
    """
    del zeta, zeta_bar  # do not enter the closed form
    a = cfg.element_spacing_m * (f_m * phi_bar - f_c * phi) / cfg.speed_of_light_m_s
    return float(dirichlet(a, cfg.n_antennas) ** 2)


@dataclass
class GainMap:
    """Per-subcarrier array gain on a Cartesian grid.

    ``gains[m, iy, ix]`` is the gain of subcarrier ``m`` at ``(x[ix], y[iy])``;
    ``composite`` is the mean over subcarriers.
    """

    x: np.ndarray
    y: np.ndarray
    freqs_hz: np.ndarray
    gains: np.ndarray
    user: PolarPoint

    @property
    def composite(self) -> np.ndarray:
        return self.gains.mean(axis=0)

    def argmax_cells(self) -> list[tuple[float, float, float]]:
        """``(x, y, gain)`` of the peak cell for each subcarrier."""
        out = []
        for g in self.gains:
            iy, ix = np.unravel_index(np.argmax(g), g.shape)
            out.append((float(self.x[ix]), float(self.y[iy]), float(g[iy, ix])))
        return out


def gain_map(cfg: ArrayConfig, grid: OfdmGrid, p: PolarPoint,
             window: tuple[float, float, float, float],
             resolution: tuple[int, int] = (201, 201)) -> GainMap:
    """Gain of carrier-designed Fresnel beams over a Cartesian window.

    For every subcarrier the user's exact spherical response at ``f_m`` is
    correlated with the ``f_c`` Fresnel steering vector toward each cell.
    ``window`` is ``(x_min, x_max, y_min, y_max)`` in meters, ``x`` broadside.
    """
    if abs(p.phi) > 1:
        raise DomainError(f"user location must be physical, got |phi| = {abs(p.phi):.6g}")
    x_min, x_max, y_min, y_max = window
    nx, ny = resolution
    if not (x_max > x_min and y_max > y_min) or nx < 1 or ny < 1:
        raise DomainError(f"empty window {window}")
    ux, uy = p.to_cartesian()
    if not (x_min <= ux <= x_max and y_min <= uy <= y_max):
        raise DomainError("window does not contain the user location")
    xs = np.linspace(x_min, x_max, nx)
    ys = np.linspace(y_min, y_max, ny)
    gx, gy = np.meshgrid(xs, ys)
    r = np.hypot(gx, gy).ravel()
    if np.any(r <= 0):
        raise DomainError("window touches the array origin")
    phi = gy.ravel() / r
    zeta = (1 - phi ** 2) / (2 * r)
    k_c = cfg.wavenumber(cfg.carrier_freq_hz)
    freqs = grid.freqs_hz
    gains = np.empty((freqs.size, ny, nx))
    for m, f in enumerate(freqs):
        u = steering_vector(cfg, p, f, "exact")
        gains[m] = kernels.gain_cells(u, cfg.offsets_m, phi, zeta, k_c).reshape(ny, nx)
    return GainMap(xs, ys, freqs, gains, p)


def write_gain_map(gm: GainMap, path, argmax_path=None) -> None:
    """CSV with ``x_m, y_m, gain_m1..gain_mM, composite``; peaks go to a second CSV."""
    path = Path(path)
    n_sub = gm.gains.shape[0]
    comp = gm.composite
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_m", "y_m", *[f"gain_m{m + 1}" for m in range(n_sub)], "composite"])
        for iy, y in enumerate(gm.y):
            for ix, x in enumerate(gm.x):
                w.writerow([repr(float(x)), repr(float(y)),
                            *[repr(float(gm.gains[m, iy, ix])) for m in range(n_sub)],
                            repr(float(comp[iy, ix]))])
    if argmax_path is None:
        argmax_path = path.with_name(path.stem + "_argmax.csv")
    with Path(argmax_path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subcarrier", "freq_hz", "x_m", "y_m", "phi", "range_m", "gain"])
        for m, (x, y, g) in enumerate(gm.argmax_cells()):
            cell = PolarPoint.from_cartesian(x, y)
            w.writerow([m + 1, repr(float(gm.freqs_hz[m])), repr(x), repr(y),
                        repr(cell.phi), repr(cell.range_m), repr(g)])


def peak_on_polar_grid(cfg: ArrayConfig, p: PolarPoint, freq_hz: float, phi_grid,
                       zeta_grid) -> tuple[int, int, np.ndarray]:
    """Argmax of the direct-sum gain over a (phi, zeta) product grid.

    Returns ``(i_phi, i_zeta, gains)`` with ``gains`` shaped (len(phi), len(zeta)).
    """
    phi_grid = np.asarray(phi_grid, dtype=np.float64)
    zeta_grid = np.asarray(zeta_grid, dtype=np.float64)
    pp, zz = np.meshgrid(phi_grid, zeta_grid, indexing="ij")
    u = steering_vector(cfg, p, freq_hz, "exact")
    g = kernels.gain_cells(u, cfg.offsets_m, pp.ravel(), zz.ravel(),
                           cfg.wavenumber(cfg.carrier_freq_hz)).reshape(pp.shape)
    i, j = np.unravel_index(np.argmax(g), g.shape)
    return int(i), int(j), g
