"""Wideband near-field multipath channels and random user scenes."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from nbaomp.errors import ContractError, DomainError
from nbaomp.geometry import (ArrayConfig, PolarPoint, exact_distances, fraunhofer_distance,
                             steering_vector)


@dataclass(frozen=True)
class OfdmGrid:
    """Carrier, bandwidth and subcarrier count of an OFDM band."""

    carrier_hz: float
    bandwidth_hz: float
    n_subcarriers: int

    def __post_init__(self):
        if self.n_subcarriers < 1:
            raise DomainError("n_subcarriers must be >= 1")
        if not self.carrier_hz > 0:
            raise DomainError("carrier_hz must be positive")
        if self.bandwidth_hz < 0:
            raise DomainError("bandwidth_hz must be non-negative")
        if self.bandwidth_hz >= 2 * self.carrier_hz:
            raise DomainError("bandwidth must be below twice the carrier (positive subcarriers)")

    @property
    def freqs_hz(self) -> np.ndarray:
        return subcarrier_frequencies(self)


def subcarrier_frequencies(grid: OfdmGrid) -> np.ndarray:
    """``f_m = f_c + (B/M) (m - 1 - (M-1)/2)`` for m = 1..M."""
    m = np.arange(grid.n_subcarriers)
    return grid.carrier_hz + grid.bandwidth_hz / grid.n_subcarriers * (
        m - (grid.n_subcarriers - 1) / 2)


def path_gain_magnitude_sq(freq_hz, range_m, k_abs_per_m=0.0, c0=2.99792458e8):
    """Expected power gain ``(c / (4 pi f r))^2 exp(-k_abs r)`` of a THz path."""
    freq_hz = np.asarray(freq_hz, dtype=np.float64)
    range_m = np.asarray(range_m, dtype=np.float64)
    if np.any(freq_hz <= 0) or np.any(range_m <= 0):
        raise DomainError("frequency and range must be positive")
    if np.any(np.asarray(k_abs_per_m) < 0):
        raise DomainError("absorption coefficient must be non-negative")
    out = (c0 / (4 * np.pi * freq_hz * range_m)) ** 2 * np.exp(-k_abs_per_m * range_m)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PathParams:
    """One propagation path.

    The gain at subcarrier ``f`` is ``sqrt(path_gain_magnitude_sq(f, r)) * exp(1j * phase_rad)``;
    see :meth:`gains`. A non-None ``amplitude`` replaces the spreading-loss
    magnitude with a frequency-flat constant (handy for fixtures).
    """

    location: PolarPoint
    delay_s: float
    phase_rad: float = 0.0
    amplitude: float | None = None

    def __post_init__(self):
        if self.delay_s < 0:
            raise DomainError("delay must be non-negative")

    def gains(self, freqs_hz, k_abs_per_m=0.0) -> np.ndarray:
        if self.amplitude is not None:
            return np.full(np.shape(freqs_hz), self.amplitude * np.exp(1j * self.phase_rad))
        mag = np.sqrt(path_gain_magnitude_sq(np.asarray(freqs_hz), self.location.range_m,
                                             k_abs_per_m))
        return mag * np.exp(1j * self.phase_rad)


@dataclass(frozen=True)
class UserScene:
    users: tuple[tuple[PathParams, ...], ...]
    k_abs_per_m: float = 0.0

    def __post_init__(self):
        if not self.users:
            raise DomainError("scene needs at least one user")
        n_paths = {len(u) for u in self.users}
        if len(n_paths) != 1 or 0 in n_paths:
            raise DomainError("every user needs the same, non-zero number of paths")

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_paths(self) -> int:
        return len(self.users[0])


@dataclass
class ChannelRealization:
    """``h[k, m]`` is the length-N channel of user k at subcarrier m."""

    h: np.ndarray
    scene: UserScene
    freqs_hz: np.ndarray = field(repr=False)


def draw_scene(seed, n_users: int, n_paths: int, range_window: tuple[float, float],
               k_abs_per_m: float = 0.0, cfg: ArrayConfig | None = None) -> UserScene:
    """Random scene: phi ~ U[-1, 1], r ~ U[r_lo, r_hi], delay r / c, phase ~ U[0, 2 pi).

    ``seed`` is anything :func:`numpy.random.default_rng` accepts. When ``cfg``
    is given the window must lie inside the Fraunhofer distance.
    """
    r_lo, r_hi = range_window
    if not (r_lo > 0 and r_hi > r_lo):
        raise DomainError(f"empty or non-positive range window {range_window}")
    if cfg is not None and r_hi > fraunhofer_distance(cfg):
        raise DomainError("range window extends beyond the Fraunhofer distance")
    if n_users < 1 or n_paths < 1:
        raise DomainError("need at least one user and one path")
    rng = np.random.default_rng(seed)
    c0 = cfg.speed_of_light_m_s if cfg is not None else 2.99792458e8
    phi = rng.uniform(-1.0, 1.0, (n_users, n_paths))
    r = rng.uniform(r_lo, r_hi, (n_users, n_paths))
    phase = rng.uniform(0.0, 2 * np.pi, (n_users, n_paths))
    users = tuple(
        tuple(PathParams(PolarPoint(float(phi[k, l]), float(r[k, l])), float(r[k, l] / c0),
                         float(phase[k, l]))
              for l in range(n_paths))
        for k in range(n_users))
    return UserScene(users, k_abs_per_m)


def path_responses(path: PathParams, freqs_hz, cfg: ArrayConfig, mode: str = "exact",
                   k_abs_per_m: float = 0.0) -> np.ndarray:
    """Per-subcarrier contribution ``alpha_m a_m e^{-j 2 pi tau f_m}`` of one path, shape (M, N).

    ``a_m`` is the unit-modulus steering vector at ``f_m``; no ``sqrt(N/L)`` or
    ``1/sqrt(N)`` factor is applied here.
    """
    freqs = np.asarray(freqs_hz, dtype=np.float64)
    gains = path.gains(freqs, k_abs_per_m)
    delay = np.exp(-2j * np.pi * path.delay_s * freqs)
    if mode == "exact":
        # One distance evaluation shared by all subcarriers.
        excess = exact_distances(cfg, path.location) - path.location.range_m
        k = 2 * np.pi * freqs / cfg.speed_of_light_m_s
        steer = np.exp(-1j * np.outer(k, excess))
    else:
        steer = np.stack([steering_vector(cfg, path.location, f, mode) for f in freqs])
    return (gains * delay)[:, None] * steer


def assemble_channel(scene: UserScene, grid: OfdmGrid, cfg: ArrayConfig,
                     mode: str = "exact") -> ChannelRealization:
    """Sum the scene's paths into ``h`` of shape (K, M, N).

    Each path enters as ``sqrt(N/L) * alpha * a(f_m) / sqrt(N) * exp(-j 2 pi tau f_m)``.
    """
    freqs = grid.freqs_hz
    n = cfg.n_antennas
    scale = math.sqrt(n / scene.n_paths) / math.sqrt(n)
    h = np.zeros((scene.n_users, freqs.size, n), dtype=np.complex128)
    for k, paths in enumerate(scene.users):
        for path in paths:
            h[k] += path_responses(path, freqs, cfg, mode, scene.k_abs_per_m)
    h *= scale
    return ChannelRealization(h, scene, freqs)


SCENE_FIELDS = ("user", "path", "phi", "range_m", "delay_s", "phase_rad", "amplitude")


def write_scene(scene: UserScene, path) -> None:
    """Write one CSV record per path; ``k_abs`` goes in a leading comment line."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# k_abs_per_m={scene.k_abs_per_m!r}\n")
        writer = csv.writer(fh)
        writer.writerow(SCENE_FIELDS)
        for k, paths in enumerate(scene.users):
            for l, p in enumerate(paths):
                writer.writerow([k, l, repr(p.location.phi), repr(p.location.range_m),
                                 repr(p.delay_s), repr(p.phase_rad),
                                 "" if p.amplitude is None else repr(p.amplitude)])


def read_scene(path) -> UserScene:
    path = Path(path)
    k_abs = 0.0
    with path.open(newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key.strip() == "k_abs_per_m":
                k_abs = float(value)
        elif line.strip():
            body.append(line)
    rows = list(csv.DictReader(body))
    if not rows:
        raise ContractError(f"{path}: scene file has no path records")
    users: dict[int, dict[int, PathParams]] = {}
    for row in rows:
        p = PathParams(PolarPoint(float(row["phi"]), float(row["range_m"])),
                       float(row["delay_s"]), float(row["phase_rad"]),
                       float(row["amplitude"]) if row.get("amplitude") else None)
        users.setdefault(int(row["user"]), {})[int(row["path"])] = p
    ordered = tuple(tuple(users[k][l] for l in sorted(users[k])) for k in sorted(users))
    return UserScene(ordered, k_abs)
