"""Uniform linear array geometry: distances, steering vectors, Fraunhofer distance.

Conventions
-----------
The array lies on the y axis with element ``n`` (1-based) at ``(0, (n-1) d)``;
the x axis is broadside. A point is described by its sine-angle
``phi = sin(theta)`` (theta measured from broadside toward +y) and its range
``r`` from the first element. Steering vectors are returned with unit-modulus
entries; callers apply any ``1/sqrt(N)`` normalization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from nbaomp import kernels
from nbaomp.errors import DomainError

SPEED_OF_LIGHT = 2.99792458e8

STEERING_MODES = ("exact", "fresnel")


@dataclass(frozen=True)
class ArrayConfig:
    """ULA geometry and carrier constants.

    ``element_spacing_m`` defaults to half the carrier wavelength.
    ``aperture`` picks the convention for the aperture length used by
    :func:`fraunhofer_distance`: ``"nd"`` (D = N d) or ``"n-1"`` (D = (N-1) d).
    """

    n_antennas: int
    carrier_freq_hz: float
    element_spacing_m: float | None = None
    aperture: str = "nd"
    speed_of_light_m_s: float = field(default=SPEED_OF_LIGHT)

    def __post_init__(self):
        if int(self.n_antennas) != self.n_antennas or self.n_antennas < 2:
            raise DomainError(f"n_antennas must be an integer >= 2, got {self.n_antennas}")
        if not self.carrier_freq_hz > 0:
            raise DomainError("carrier_freq_hz must be positive")
        if self.element_spacing_m is None:
            object.__setattr__(self, "element_spacing_m", self.wavelength_m / 2)
        if not self.element_spacing_m > 0:
            raise DomainError("element_spacing_m must be positive")
        if self.aperture not in ("nd", "n-1"):
            raise DomainError(f"unknown aperture convention {self.aperture!r}")

    @property
    def wavelength_m(self) -> float:
        return self.speed_of_light_m_s / self.carrier_freq_hz

    @property
    def aperture_m(self) -> float:
        count = self.n_antennas if self.aperture == "nd" else self.n_antennas - 1
        return count * self.element_spacing_m

    @property
    def offsets_m(self) -> np.ndarray:
        """Element positions ``(n-1) d`` for n = 1..N."""
        return np.arange(self.n_antennas) * self.element_spacing_m

    def wavenumber(self, freq_hz: float) -> float:
        if not freq_hz > 0:
            raise DomainError(f"frequency must be positive, got {freq_hz}")
        return 2 * math.pi * freq_hz / self.speed_of_light_m_s


@dataclass(frozen=True)
class PolarPoint:
    """A location as (sine-angle, range in meters)."""

    phi: float
    range_m: float

    def __post_init__(self):
        if not self.range_m > 0:
            raise DomainError(f"range must be positive, got {self.range_m}")

    @property
    def zeta(self) -> float:
        """Wavefront curvature term ``(1 - phi^2) / (2 r)``."""
        return (1 - self.phi ** 2) / (2 * self.range_m)

    @property
    def theta(self) -> float:
        """Angle from broadside in radians (only for |phi| <= 1)."""
        return math.asin(self.phi)

    def to_cartesian(self) -> tuple[float, float]:
        cos_t = math.sqrt(max(0.0, 1 - self.phi ** 2))
        return self.range_m * cos_t, self.range_m * self.phi

    @classmethod
    def from_cartesian(cls, x: float, y: float) -> "PolarPoint":
        r = math.hypot(x, y)
        return cls(y / r, r)


def _check_index(cfg: ArrayConfig, n: int):
    if not 1 <= n <= cfg.n_antennas:
        raise IndexError(f"antenna index {n} outside 1..{cfg.n_antennas}")


def exact_distance(cfg: ArrayConfig, p: PolarPoint, n: int) -> float:
    """Distance from ``p`` to antenna ``n`` (1-based) by the law of cosines."""
    _check_index(cfg, n)
    x = (n - 1) * cfg.element_spacing_m
    return math.sqrt(p.range_m ** 2 + x * x - 2 * p.range_m * x * p.phi)


def fresnel_distance(cfg: ArrayConfig, p: PolarPoint, n: int) -> float:
    """Second-order (Fresnel) expansion of :func:`exact_distance`."""
    _check_index(cfg, n)
    x = (n - 1) * cfg.element_spacing_m
    return p.range_m - x * p.phi + x * x * p.zeta


def exact_distances(cfg: ArrayConfig, p: PolarPoint) -> np.ndarray:
    """:func:`exact_distance` for all N antennas at once."""
    x = cfg.offsets_m
    r = p.range_m
    return np.sqrt(r * r + x * x - 2 * r * x * p.phi)


def steering_vector(cfg: ArrayConfig, p: PolarPoint, freq_hz: float,
                    mode: str = "exact") -> np.ndarray:
    """Unit-modulus near-field steering vector at an arbitrary frequency.

    The exact mode uses the phase ``-k (r_n - r)`` of the spherical wave, so
    the first entry is 1. The Fresnel mode uses ``k ((n-1) d phi - (n-1)^2 d^2 zeta)``.
    """
    k = cfg.wavenumber(freq_hz)
    if mode == "exact":
        return np.exp(-1j * k * (exact_distances(cfg, p) - p.range_m))
    if mode == "fresnel":
        return fresnel_steering(cfg, p.phi, p.zeta, freq_hz)
    raise ValueError(f"mode must be one of {STEERING_MODES}, got {mode!r}")


def fresnel_steering(cfg: ArrayConfig, phi, zeta, freq_hz: float) -> np.ndarray:
    """Fresnel steering in (phi, zeta) coordinates.

    Scalars give a length-N vector; arrays of length Q give an (N, Q) matrix.
    Working in curvature coordinates keeps endpoints ``|phi| = 1`` regular.
    """
    k = cfg.wavenumber(freq_hz)
    phi_arr = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    zeta_arr = np.atleast_1d(np.asarray(zeta, dtype=np.float64))
    out = kernels.fresnel_matrix(cfg.offsets_m, phi_arr, zeta_arr, k)
    if np.ndim(phi) == 0:
        return out[:, 0]
    return out


def exact_steering_matrix(cfg: ArrayConfig, points, freq_hz: float) -> np.ndarray:
    """Exact-mode steering vectors for several points as an (N, len(points)) matrix.

    A point with infinite range gives the planar (far-field) response.
    """
    k = cfg.wavenumber(freq_hz)
    x = cfg.offsets_m
    cols = []
    for p in points:
        if math.isinf(p.range_m):
            cols.append(np.exp(1j * k * x * p.phi))
        else:
            cols.append(np.exp(-1j * k * (exact_distances(cfg, p) - p.range_m)))
    if not cols:
        return np.zeros((cfg.n_antennas, 0), dtype=np.complex128)
    return np.stack(cols, axis=1)


def fraunhofer_distance(cfg: ArrayConfig) -> float:
    """Near/far-field boundary ``2 D^2 / lambda``."""
    return 2 * cfg.aperture_m ** 2 / cfg.wavelength_m
