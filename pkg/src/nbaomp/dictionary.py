"""Polar grids and beam-split-aware (subcarrier-dependent) dictionaries.

Column ``q`` of every per-subcarrier matrix tracks the same physical grid
point, so a path sitting on grid point ``q`` lights up index ``q`` on all
subcarriers at once.
"""
from __future__ import annotations

import functools
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from nbaomp.beamsplit import ORIENTATIONS, eta, image_curvature
from nbaomp.channel import OfdmGrid
from nbaomp.errors import ContractError, DomainError
from nbaomp.geometry import (ArrayConfig, PolarPoint, exact_steering_matrix, fraunhofer_distance,
                             fresnel_steering)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PolarGrid:
    """Q = q_phi * q_r physical points, phi outer and range inner.

    Ranges are spaced uniformly in the curvature proxy ``1 / (2 r)``.
    """

    phi_samples: np.ndarray
    range_samples: np.ndarray
    r_min: float
    r_max: float

    @property
    def q_phi(self) -> int:
        return self.phi_samples.size

    @property
    def q_r(self) -> int:
        return self.range_samples.size

    @property
    def size(self) -> int:
        return self.q_phi * self.q_r

    @property
    def phi(self) -> np.ndarray:
        return np.repeat(self.phi_samples, self.q_r)

    @property
    def range_m(self) -> np.ndarray:
        return np.tile(self.range_samples, self.q_phi)

    @property
    def zeta(self) -> np.ndarray:
        return (1 - self.phi ** 2) / (2 * self.range_m)

    def point(self, q: int) -> PolarPoint:
        i, j = divmod(int(q), self.q_r)
        return PolarPoint(float(self.phi_samples[i]), float(self.range_samples[j]))

    def points(self) -> list[PolarPoint]:
        return [self.point(q) for q in range(self.size)]

    def index(self, i_phi: int, i_r: int) -> int:
        return i_phi * self.q_r + i_r


def build_grid(q_phi: int, q_r: int, r_min: float, r_max: float,
               cfg: ArrayConfig | None = None) -> PolarGrid:
    """Uniform sine-angle samples on [-1, 1] times ranges uniform in ``1 / (2 r)``.

    With ``q_r == 1`` the single range sits at the curvature midpoint.
    """
    if q_phi < 2 or q_r < 1:
        raise DomainError("need q_phi >= 2 and q_r >= 1")
    if not (0 < r_min <= r_max) or (q_r > 1 and r_min == r_max):
        raise DomainError(f"invalid range bounds [{r_min}, {r_max}]")
    if cfg is not None and r_max > fraunhofer_distance(cfg) * (1 + 1e-12):
        raise DomainError("r_max exceeds the Fraunhofer distance")
    phi = np.linspace(-1.0, 1.0, q_phi)
    c_lo, c_hi = 1 / (2 * r_max), 1 / (2 * r_min)
    if q_r == 1:
        curv = np.array([(c_lo + c_hi) / 2])
    else:
        curv = np.linspace(c_lo, c_hi, q_r)
    ranges = 1 / (2 * curv)
    # Pin the endpoints exactly; 1/(1/x) is not always x in floating point.
    if q_r > 1:
        ranges[0], ranges[-1] = r_max, r_min
    elif r_min == r_max:
        ranges[0] = r_min
    return PolarGrid(phi, ranges, float(r_min), float(r_max))


def default_grid(cfg: ArrayConfig, r_min: float | None = None, r_max: float | None = None,
                 q_phi: int | None = None, q_r: int = 5) -> PolarGrid:
    """``2N x 5`` grid (Q = 10 N) spanning ``[0.05 F, F]`` unless overridden."""
    f = fraunhofer_distance(cfg)
    return build_grid(q_phi or 2 * cfg.n_antennas, q_r,
                      r_min if r_min is not None else 0.05 * f,
                      r_max if r_max is not None else f, cfg)


@dataclass
class NbaDictionary:
    """Per-subcarrier dictionaries ``C_m`` for a fixed physical grid.

    Column ``q`` of ``C_m`` is the unit-norm carrier-frequency Fresnel steering
    vector toward the subcarrier-``m`` image of grid point ``q`` (see
    :func:`nbaomp.beamsplit.image_curvature`). Matrices are generated on
    demand so paper-scale dictionaries need not be held in memory.
    """

    grid: PolarGrid
    cfg: ArrayConfig
    ofdm: OfdmGrid
    orientation: str
    eta_list: np.ndarray = field(init=False)
    out_of_bounds: int = field(init=False, default=0)

    def __post_init__(self):
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}")
        if self.ofdm.carrier_hz != self.cfg.carrier_freq_hz:
            raise ContractError("OFDM carrier and array carrier differ")
        self.eta_list = np.array([eta(self.ofdm.carrier_hz, f) for f in self.ofdm.freqs_hz])
        phis = [np.abs(self.design_points(m)[0]) for m in range(self.n_subcarriers)]
        self.out_of_bounds = int(sum(np.count_nonzero(a > 1) for a in phis))
        if self.out_of_bounds:
            log.info("%d dictionary images have |phi| > 1 (max %.4f); kept unclamped",
                        self.out_of_bounds, max(a.max() for a in phis))

    @property
    def n_subcarriers(self) -> int:
        return self.ofdm.n_subcarriers

    @property
    def n_atoms(self) -> int:
        return self.grid.size

    def design_points(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        """(phi, zeta) of the carrier-frequency beam used for column q at subcarrier m."""
        return image_curvature(self.grid.phi, self.grid.zeta, self.eta_list[m], self.orientation)

    def matrix(self, m: int) -> np.ndarray:
        phi, zeta = self.design_points(m)
        return fresnel_steering(self.cfg, phi, zeta, self.cfg.carrier_freq_hz) / np.sqrt(
            self.cfg.n_antennas)

    def atoms(self, m: int, idx) -> np.ndarray:
        phi, zeta = self.design_points(m)
        idx = np.asarray(idx, dtype=int)
        return fresnel_steering(self.cfg, phi[idx], zeta[idx], self.cfg.carrier_freq_hz) / np.sqrt(
            self.cfg.n_antennas)

    def stack(self) -> np.ndarray:
        """All matrices as an (M, N, Q) array."""
        return np.stack([self.matrix(m) for m in range(self.n_subcarriers)])

    def projected(self, beamformer: np.ndarray) -> np.ndarray:
        """``F C_m`` for every m, shape (M, P, Q)."""
        return np.stack([beamformer @ self.matrix(m) for m in range(self.n_subcarriers)])

    def readout(self, q: int) -> PolarPoint:
        """Physical location of atom ``q`` (its grid anchor)."""
        return self.grid.point(q)


def build_nba_dictionary(grid: PolarGrid, ofdm: OfdmGrid, cfg: ArrayConfig,
                         orientation: str | None = None) -> NbaDictionary:
    """Beam-split-aware dictionary; ``orientation=None`` uses :func:`default_orientation`."""
    return NbaDictionary(grid, cfg, ofdm, orientation or default_orientation())


@dataclass
class SiDictionary:
    """Subcarrier-independent dictionary (one matrix for all subcarriers).

    ``family`` is ``"nearfield"`` (carrier Fresnel steering at every grid
    point) or ``"farfield"`` (planar steering, one column per angle; readout
    range is infinite).
    """

    matrix_: np.ndarray
    phi: np.ndarray
    range_m: np.ndarray
    family: str
    n_subcarriers: int = 1

    @property
    def n_atoms(self) -> int:
        return self.matrix_.shape[1]

    def matrix(self, m: int = 0) -> np.ndarray:
        return self.matrix_

    def atoms(self, m: int, idx) -> np.ndarray:
        return self.matrix_[:, np.asarray(idx, dtype=int)]

    def projected(self, beamformer: np.ndarray, n_subcarriers: int | None = None) -> np.ndarray:
        proj = beamformer @ self.matrix_
        m = n_subcarriers or self.n_subcarriers
        return np.broadcast_to(proj, (m, *proj.shape))

    def readout(self, q: int) -> PolarPoint:
        return PolarPoint(float(self.phi[q]), float(self.range_m[q]))


def build_si_dictionary(grid: PolarGrid, cfg: ArrayConfig, family: str = "nearfield",
                        n_subcarriers: int = 1) -> SiDictionary:
    n = cfg.n_antennas
    if family == "nearfield":
        mat = fresnel_steering(cfg, grid.phi, grid.zeta, cfg.carrier_freq_hz) / np.sqrt(n)
        return SiDictionary(mat, grid.phi, grid.range_m, family, n_subcarriers)
    if family == "farfield":
        phi = grid.phi_samples.copy()
        mat = fresnel_steering(cfg, phi, np.zeros_like(phi), cfg.carrier_freq_hz) / np.sqrt(n)
        return SiDictionary(mat, phi, np.full(phi.shape, np.inf), family, n_subcarriers)
    raise ValueError(f"family must be 'nearfield' or 'farfield', got {family!r}")


@dataclass(frozen=True)
class CoherenceProfile:
    max: float
    counts: np.ndarray
    edges: np.ndarray


def gram_abs(matrix: np.ndarray) -> np.ndarray:
    """``|C^H C|`` with the diagonal set to zero."""
    g = np.abs(matrix.conj().T @ matrix)
    np.fill_diagonal(g, 0.0)
    return g


def coherence_profile(matrix: np.ndarray, bins: int = 20) -> CoherenceProfile:
    """Maximum and histogram of ``|c_i^H c_j|`` over pairs ``i != j``."""
    norms = np.linalg.norm(matrix, axis=0)
    if not np.allclose(norms, 1.0, atol=1e-10):
        raise ContractError("coherence needs unit-norm columns")
    g = gram_abs(matrix)
    iu = np.triu_indices(g.shape[0], k=1)
    vals = np.minimum(g[iu], 1.0)
    counts, edges = np.histogram(vals, bins=bins, range=(0.0, 1.0))
    return CoherenceProfile(float(vals.max()) if vals.size else 0.0, counts, edges)


@dataclass(frozen=True)
class OrientationCheck:
    orientation: str
    hits: int
    total: int
    mean_self_corr: float

    @property
    def passed(self) -> bool:
        return self.hits == self.total


def orientation_oracle(cfg: ArrayConfig, ofdm: OfdmGrid, grid: PolarGrid,
                       subcarrier: int = 0) -> tuple[str, list[OrientationCheck]]:
    """Pick the image-mapping direction by exhaustive correlation.

    For each orientation, build column ``q`` at ``subcarrier`` and correlate it
    with the exact spherical response at ``f_m`` from every grid point. An
    orientation scores a hit at ``q`` when its own column is (one of) the
    best-correlated. The winner has the most hits, then the larger mean
    self-correlation.
    """
    f_m = ofdm.freqs_hz[subcarrier]
    truth = exact_steering_matrix(cfg, grid.points(), f_m) / np.sqrt(cfg.n_antennas)
    checks = []
    for orient in ORIENTATIONS:
        d = NbaDictionary(grid, cfg, ofdm, orient)
        corr = np.abs(d.matrix(subcarrier).conj().T @ truth)  # [atom, truth point]
        own = np.diag(corr)
        hits = int(np.count_nonzero(own >= corr.max(axis=0) - 1e-12))
        checks.append(OrientationCheck(orient, hits, grid.size, float(own.mean())))
    best = max(checks, key=lambda c: (c.hits, c.mean_self_corr))
    return best.orientation, checks


@functools.lru_cache(maxsize=1)
def default_orientation() -> str:
    """Orientation chosen by :func:`orientation_oracle` on a band-edge reference case.

    Reference: N = 64 at 300 GHz, 30 GHz bandwidth over 8 subcarriers, a
    16-point grid (8 angles x 2 ranges) inside ``[0.2 F, 0.9 F]``.
    """
    cfg = ArrayConfig(64, 300e9)
    ofdm = OfdmGrid(300e9, 30e9, 8)
    f = fraunhofer_distance(cfg)
    grid = build_grid(8, 2, 0.2 * f, 0.9 * f, cfg)
    return orientation_oracle(cfg, ofdm, grid, subcarrier=0)[0]


_CACHE_MAGIC = b"NBADICT1"
_HEADER = struct.Struct("<8sIIIIIdddd8s")


def save_dictionary(d: NbaDictionary, path) -> None:
    """Binary cache: a fixed header then M row-major (N, Q) complex64 matrices.

    Header (little endian): magic ``NBADICT1``, N, M, Q, q_phi, q_r (uint32),
    r_min, r_max, carrier, bandwidth (float64), orientation (8 bytes, padded).
    """
    header = _HEADER.pack(_CACHE_MAGIC, d.cfg.n_antennas, d.n_subcarriers, d.n_atoms,
                          d.grid.q_phi, d.grid.q_r, d.grid.r_min, d.grid.r_max,
                          d.ofdm.carrier_hz, d.ofdm.bandwidth_hz,
                          d.orientation.encode().ljust(8, b"\0"))
    with Path(path).open("wb") as fh:
        fh.write(header)
        for m in range(d.n_subcarriers):
            fh.write(np.ascontiguousarray(d.matrix(m), dtype=np.complex64).tobytes())


def load_dictionary(path) -> tuple[dict, np.ndarray]:
    """Read a cache written by :func:`save_dictionary`; returns (header, (M, N, Q) array)."""
    raw = Path(path).read_bytes()
    fields = _HEADER.unpack_from(raw)
    if fields[0] != _CACHE_MAGIC:
        raise ContractError(f"{path}: not a dictionary cache")
    keys = ("n_antennas", "n_subcarriers", "n_atoms", "q_phi", "q_r", "r_min", "r_max",
            "carrier_hz", "bandwidth_hz")
    header = dict(zip(keys, fields[1:10]))
    header["orientation"] = fields[10].rstrip(b"\0").decode()
    n, m, q = header["n_antennas"], header["n_subcarriers"], header["n_atoms"]
    data = np.frombuffer(raw, dtype=np.complex64, offset=_HEADER.size)
    if data.size != n * m * q:
        raise ContractError(f"{path}: truncated dictionary cache")
    return header, data.reshape(m, n, q)
