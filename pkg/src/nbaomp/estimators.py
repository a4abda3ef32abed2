"""Pilot observations and channel estimators.

All estimators work on one user's observations ``y`` of shape (M, P): one
length-P pilot vector per subcarrier. The OMP family shares a greedy loop that
picks atoms by the joint objective ``sum_m |(F C_m)^H r_m|`` and deflates each
subcarrier's residual by orthogonal projection.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from nbaomp.beamsplit import split_deltas
from nbaomp.channel import ChannelRealization, PathParams, path_responses
from nbaomp.errors import ContractError, DomainError
from nbaomp.geometry import ArrayConfig, PolarPoint, exact_steering_matrix

log = logging.getLogger(__name__)

# Singular values below RCOND * largest are treated as zero in pseudo-inverses.
RCOND = 1e-10
NMSE_FLOOR_DB = -120.0


@dataclass(frozen=True)
class PilotConfig:
    """Pilot beamformer ``F`` (P x N, entries of modulus 1/sqrt(N)) and noise variance."""

    beamformer: np.ndarray
    noise_var: float = 0.0

    def __post_init__(self):
        f = self.beamformer
        if f.ndim != 2 or f.shape[0] < 1:
            raise ContractError("beamformer must be a non-empty P x N matrix")
        if not np.allclose(np.abs(f), 1 / math.sqrt(f.shape[1]), rtol=0, atol=1e-12):
            raise ContractError("beamformer entries must have modulus 1/sqrt(N)")
        if self.noise_var < 0:
            raise DomainError("noise variance must be non-negative")

    @property
    def n_pilots(self) -> int:
        return self.beamformer.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.beamformer.shape[1]


def make_pilot_config(seed, n_pilots: int, n_antennas: int, noise_var: float = 0.0,
                      design: str = "qpsk") -> PilotConfig:
    """Random constant-modulus pilot beamformer.

    ``qpsk``: i.i.d. phases from {0, pi/2, pi, 3 pi/2}. ``orthogonal``: DFT
    rows (or columns, when P > N) with i.i.d. QPSK column phases and a random
    row order, so ``F F^H`` or ``F^H F`` is a scaled identity.
    """
    if n_pilots < 1 or n_antennas < 1:
        raise DomainError("need at least one pilot and one antenna")
    rng = np.random.default_rng(seed)
    scale = 1 / math.sqrt(n_antennas)
    if design == "qpsk":
        f = scale * np.exp(0.5j * np.pi * rng.integers(0, 4, (n_pilots, n_antennas)))
    elif design == "orthogonal":
        size = max(n_pilots, n_antennas)
        p = np.arange(size)[:, None]
        dft = np.exp(-2j * np.pi * p * np.arange(size)[None, :] / size)
        rows = rng.permutation(size)[:n_pilots] if n_pilots <= n_antennas else np.arange(size)
        cols = np.arange(n_antennas)
        col_phase = np.exp(0.5j * np.pi * rng.integers(0, 4, n_antennas))
        f = scale * dft[np.ix_(rows, cols)] * col_phase[None, :]
        if n_pilots > n_antennas:
            f = f[rng.permutation(n_pilots)]
    else:
        raise ValueError(f"unknown pilot design {design!r}")
    return PilotConfig(f, noise_var)


def observe(pilot: PilotConfig, h, seed, noise_var=None) -> np.ndarray:
    """``y = F h + w`` with circular Gaussian ``w`` of per-entry variance ``noise_var``.

    ``h`` is a :class:`ChannelRealization` or an array whose last axis has
    length N. ``noise_var`` defaults to ``pilot.noise_var``; an array of shape
    (K,) gives each user its own level when ``h`` is (K, M, N).
    """
    if isinstance(h, ChannelRealization):
        h = h.h
    h = np.asarray(h)
    if h.shape[-1] != pilot.n_antennas:
        raise ContractError(f"channel length {h.shape[-1]} != N = {pilot.n_antennas}")
    y = h @ pilot.beamformer.T
    var = pilot.noise_var if noise_var is None else noise_var
    var = np.asarray(var, dtype=np.float64)
    if np.any(var < 0):
        raise DomainError("noise variance must be non-negative")
    if np.any(var > 0):
        rng = np.random.default_rng(seed)
        w = (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)) / math.sqrt(2)
        std = np.sqrt(var)
        if std.ndim == 1:
            std = std.reshape((-1,) + (1,) * (y.ndim - 1))
        y = y + std * w
    return y


def noise_var_for_snr(h: np.ndarray, snr_db: float) -> np.ndarray:
    """Per-user noise variance giving the requested received SNR.

    SNR is the mean per-antenna channel power ``sum_m ||h_k[m]||^2 / (M N)``
    over the noise variance; with unit-power pilots and ``|F_ij| = 1/sqrt(N)``
    this is also the expected received pilot SNR per channel use.
    """
    h = np.asarray(h)
    power = np.mean(np.abs(h) ** 2, axis=(-2, -1))
    return power / 10 ** (snr_db / 10)


@dataclass
class UserEstimate:
    """Estimate for one user.

    ``split_phi[l, m]`` and ``split_r[l, m]`` are the estimated angular and
    range beam split of path ``l`` at subcarrier ``m`` (NaN where undefined or
    not estimated). ``residual_norms[0]`` is ``||y||``; entry ``l`` follows
    iteration ``l``.
    """

    estimator: str
    h_hat: np.ndarray
    support: list[int] = field(default_factory=list)
    locations: list[PolarPoint] = field(default_factory=list)
    split_phi: np.ndarray | None = None
    split_r: np.ndarray | None = None
    residual_norms: list[float] = field(default_factory=list)
    pilot_uses: int = 0


@dataclass
class EstimateReport:
    users: list[UserEstimate]

    @property
    def h_hat(self) -> np.ndarray:
        return np.stack([u.h_hat for u in self.users])

    def records(self, h_true: np.ndarray | None = None) -> list[dict]:
        """One JSON-ready dict per user; per-subcarrier NMSE when ``h_true`` is given."""
        out = []
        for k, u in enumerate(self.users):
            rec = {
                "user": k,
                "estimator": u.estimator,
                "support": [int(q) for q in u.support],
                "phi_hat": [p.phi for p in u.locations],
                "range_hat_m": [p.range_m if math.isfinite(p.range_m) else None
                                for p in u.locations],
                "residual_norms": [float(v) for v in u.residual_norms],
                "pilot_uses": u.pilot_uses,
            }
            if h_true is not None:
                rec["nmse_db_per_m"] = [nmse(h_true[k, m], u.h_hat[m])
                                        for m in range(u.h_hat.shape[0])]
            out.append(rec)
        return out


def write_report(report: EstimateReport, path, h_true: np.ndarray | None = None) -> None:
    """JSON-lines dump, one record per user."""
    with Path(path).open("w") as fh:
        for rec in report.records(h_true):
            fh.write(json.dumps(rec, allow_nan=False, default=_json_float) + "\n")


def _json_float(x):
    return float(x)


def atom_weights(proj: np.ndarray, normalize: bool = True) -> np.ndarray:
    """Per-subcarrier atom weights (M, Q): ``1 / ||F c_{m,q}||`` or all ones.

    Atoms that project to zero get weight zero so they can never win.
    """
    if not normalize:
        return np.ones((proj.shape[0], proj.shape[2]))
    norms = np.linalg.norm(proj, axis=1)
    return np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)


def selection_objective(residual: np.ndarray, proj: np.ndarray,
                        normalize: bool = True) -> np.ndarray:
    """Joint score per atom, ``sum_m w_{m,q} |(F c_{m,q})^H r[m]|``, shape (Q,)."""
    corr = np.abs(np.einsum("mpq,mp->mq", proj.conj(), residual))
    return (corr * atom_weights(proj, normalize)).sum(axis=0)


def _greedy(y: np.ndarray, proj: np.ndarray, n_paths: int, normalize: bool = True):
    """Joint-subcarrier OMP support search.

    ``y`` is (M, P) and ``proj`` (M, P, Q) holds ``F C_m``. With ``normalize``
    each projected atom is scored by its correlation divided by its norm;
    otherwise the raw correlation is used. Returns the support, residual norms
    and the final residual.
    """
    n_sub, n_pilots, n_atoms = proj.shape
    if y.shape != (n_sub, n_pilots):
        raise ContractError(f"observations {y.shape} do not match dictionary {proj.shape}")
    if not 1 <= n_paths <= min(n_pilots, n_atoms):
        raise ContractError(f"need 1 <= L <= min(P, Q), got L = {n_paths}")
    residual = y.copy()
    support: list[int] = []
    norms = [float(np.linalg.norm(residual))]
    conj_proj = proj.conj()
    weights = atom_weights(proj, normalize)
    for _ in range(n_paths):
        corr = np.einsum("mpq,mp->mq", conj_proj, residual)
        objective = (np.abs(corr) * weights).sum(axis=0)
        q = int(np.argmax(objective))
        if q in support:
            log.warning("OMP re-selected atom %d; taking the next best", q)
            objective[support] = -np.inf
            q = int(np.argmax(objective))
        support.append(q)
        psi = proj[:, :, support]
        coef = np.linalg.pinv(psi, rcond=RCOND) @ y[:, :, None]
        residual = y - (psi @ coef)[:, :, 0]
        norms.append(float(np.linalg.norm(residual)))
    return support, norms, residual


def _reconstruct(y, pilot, basis):
    """``h_hat[m] = Xi_m (F Xi_m)^+ y[m]`` for per-subcarrier bases ``Xi_m`` (M, N, L)."""
    psi = pilot.beamformer[None] @ basis
    coef = np.linalg.pinv(psi, rcond=RCOND) @ y[:, :, None]
    return (basis @ coef)[:, :, 0]


def nba_omp(y: np.ndarray, dictionary, pilot: PilotConfig, n_paths: int,
            recon: str = "exact", proj: np.ndarray | None = None,
            normalize: bool = True) -> UserEstimate:
    """Beam-split-aware OMP for one user.

    Atoms are chosen jointly over subcarriers from the per-subcarrier
    dictionaries; each chosen atom is read out as its physical grid point, and
    the per-subcarrier beam split of that point is reported. With
    ``recon="exact"`` the channel is rebuilt from exact spherical steering
    vectors at ``f_m`` toward the estimated points, with coefficients fitted by
    least squares on that basis; ``recon="dictionary"`` reuses the dictionary
    atoms. ``proj`` may carry a precomputed ``dictionary.projected(F)``.
    ``normalize=False`` scores atoms by raw rather than norm-scaled correlation.
    """
    y = np.asarray(y)
    if proj is None:
        proj = dictionary.projected(pilot.beamformer)
    support, norms, _ = _greedy(y, proj, n_paths, normalize)
    locations = [dictionary.readout(q) for q in support]
    etas = dictionary.eta_list
    split_phi = np.full((n_paths, etas.size), np.nan)
    split_r = np.full((n_paths, etas.size), np.nan)
    for l, p in enumerate(locations):
        for m, e in enumerate(etas):
            try:
                rep = split_deltas(p, e)
            except DomainError:
                continue
            split_phi[l, m] = rep.delta_phi
            split_r[l, m] = rep.delta_r
    freqs = dictionary.ofdm.freqs_hz
    basis = _basis(dictionary, support, locations, freqs, recon)
    h_hat = _reconstruct(y, pilot, basis)
    return UserEstimate("nba-omp", h_hat, support, locations, split_phi, split_r, norms,
                        pilot.n_pilots)


def baseline_omp(y: np.ndarray, dictionary, pilot: PilotConfig, n_paths: int,
                 recon: str = "dictionary", cfg: ArrayConfig | None = None,
                 freqs_hz=None, proj: np.ndarray | None = None,
                 normalize: bool = True) -> UserEstimate:
    """OMP with one subcarrier-independent dictionary (near- or far-field).

    The joint objective over subcarriers is kept; locations are the raw grid
    points and no beam-split correction is applied. By default the channel is
    rebuilt from the same subcarrier-independent atoms.
    """
    y = np.asarray(y)
    n_sub = y.shape[0]
    if proj is None:
        proj = dictionary.projected(pilot.beamformer, n_sub)
    support, norms, _ = _greedy(y, proj, n_paths, normalize)
    locations = [dictionary.readout(q) for q in support]
    if recon == "exact":
        if cfg is None or freqs_hz is None:
            raise ContractError("exact reconstruction needs cfg and freqs_hz")
        basis = np.stack([exact_steering_matrix(cfg, locations, f) for f in freqs_hz])
        basis /= math.sqrt(cfg.n_antennas)
    else:
        basis = np.broadcast_to(dictionary.atoms(0, support), (n_sub, pilot.n_antennas,
                                                               len(support)))
    h_hat = _reconstruct(y, pilot, basis)
    name = "nf-omp" if dictionary.family == "nearfield" else "ff-omp"
    nan = np.full((n_paths, n_sub), np.nan)
    return UserEstimate(name, h_hat, support, locations, nan, nan.copy(), norms, pilot.n_pilots)


def _basis(dictionary, support, locations, freqs, recon):
    if recon == "exact":
        cfg = dictionary.cfg
        basis = np.stack([exact_steering_matrix(cfg, locations, f) for f in freqs])
        return basis / math.sqrt(cfg.n_antennas)
    if recon == "dictionary":
        return np.stack([dictionary.atoms(m, support) for m in range(len(freqs))])
    raise ValueError(f"recon must be 'exact' or 'dictionary', got {recon!r}")


def ls_estimate(y: np.ndarray, pilot: PilotConfig) -> np.ndarray:
    """Least squares ``h_hat[m] = F^+ y[m]``; needs at least N pilots."""
    if pilot.n_pilots < pilot.n_antennas:
        raise ContractError(f"LS needs P >= N channel uses (P = {pilot.n_pilots}, "
                            f"N = {pilot.n_antennas})")
    return np.asarray(y) @ np.linalg.pinv(pilot.beamformer, rcond=RCOND).T


def mmse_estimate(y: np.ndarray, pilot: PilotConfig, covariance: np.ndarray,
                  noise_var: float | None = None) -> np.ndarray:
    """Linear MMSE ``h_hat[m] = R_m F^H (F R_m F^H + s^2 I)^{-1} y[m]``.

    ``covariance`` is (M, N, N). A diagonal floor of ``1e-12`` times the mean
    diagonal of the inner matrix keeps the solve well posed when it is singular.
    """
    y = np.asarray(y)
    f = pilot.beamformer
    var = pilot.noise_var if noise_var is None else float(noise_var)
    r = np.asarray(covariance)
    if r.shape != (y.shape[0], pilot.n_antennas, pilot.n_antennas):
        raise ContractError(f"covariance shape {r.shape} does not match observations")
    rfh = r @ f.conj().T                       # (M, N, P)
    inner = f[None] @ rfh                       # (M, P, P)
    eye = np.eye(pilot.n_pilots)
    scale = np.real(np.trace(inner, axis1=1, axis2=2)) / pilot.n_pilots
    floor = 1e-12 * np.maximum(scale, np.finfo(float).tiny)
    inner = inner + (var + floor)[:, None, None] * eye
    z = np.linalg.solve(inner, y[:, :, None])
    return (rfh @ z)[:, :, 0]


def genie_covariance(paths: tuple[PathParams, ...], freqs_hz, cfg: ArrayConfig,
                     k_abs_per_m: float = 0.0, n_draws: int = 1000, seed=None) -> np.ndarray:
    """Sample covariance per subcarrier for a user's path geometry, shape (M, N, N).

    Path locations, delays and gain magnitudes are kept; the per-path phases
    are redrawn i.i.d. uniform for each of ``n_draws`` realizations.
    """
    freqs = np.asarray(freqs_hz)
    n = cfg.n_antennas
    scale = math.sqrt(n / len(paths)) / math.sqrt(n)
    base = np.stack([path_responses(PathParams(p.location, p.delay_s, 0.0, p.amplitude),
                                    freqs, cfg, "exact", k_abs_per_m)
                     for p in paths], axis=-1) * scale          # (M, N, L)
    rng = np.random.default_rng(seed)
    z = np.exp(2j * np.pi * rng.random((len(paths), n_draws)))
    samples = base @ z                                           # (M, N, D)
    return samples @ samples.conj().transpose(0, 2, 1) / n_draws


def nmse(h_true: np.ndarray, h_hat: np.ndarray) -> float:
    """NMSE in dB, averaged over users in the linear domain.

    Arrays may be (N,), (M, N) or (K, M, N); each user's error is summed over
    subcarriers and normalized by its channel energy. Perfect estimates report
    ``NMSE_FLOOR_DB``.
    """
    h_true = np.asarray(h_true)
    h_hat = np.asarray(h_hat)
    if h_true.shape != h_hat.shape:
        raise ContractError(f"shape mismatch {h_true.shape} vs {h_hat.shape}")
    lin = nmse_linear(h_true, h_hat)
    return to_db(lin)


def nmse_linear(h_true: np.ndarray, h_hat: np.ndarray) -> float:
    h_true = np.asarray(h_true)
    h_hat = np.asarray(h_hat)
    if h_true.ndim < 3:
        h_true = h_true.reshape((1, -1))
        h_hat = h_hat.reshape((1, -1))
    else:
        h_true = h_true.reshape(h_true.shape[0], -1)
        h_hat = h_hat.reshape(h_hat.shape[0], -1)
    energy = np.sum(np.abs(h_true) ** 2, axis=1)
    if np.any(energy == 0):
        raise DomainError("NMSE undefined for an all-zero channel")
    err = np.sum(np.abs(h_true - h_hat) ** 2, axis=1)
    return float(np.mean(err / energy))


def to_db(lin: float) -> float:
    if lin <= 0:
        return NMSE_FLOOR_DB
    return max(10 * math.log10(lin), NMSE_FLOOR_DB)
