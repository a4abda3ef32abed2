"""Seeded Monte-Carlo sweeps (NMSE vs SNR, NMSE vs bandwidth) and their CSV output."""
from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import nbaomp
from nbaomp import kernels
from nbaomp.channel import OfdmGrid, assemble_channel, draw_scene
from nbaomp.dictionary import (build_grid, build_nba_dictionary, build_si_dictionary,
                               orientation_oracle)
from nbaomp.errors import ContractError, DomainError
from nbaomp.estimators import (EstimateReport, UserEstimate, baseline_omp, genie_covariance,
                               ls_estimate, make_pilot_config, mmse_estimate, nba_omp,
                               nmse_linear, noise_var_for_snr, observe)
from nbaomp.geometry import ArrayConfig, fraunhofer_distance

ESTIMATORS = ("nba-omp", "nf-omp", "ff-omp", "ls", "mmse")
SWEEPS = ("snr", "bandwidth")
CSV_FIELDS = ("sweep_value", "estimator", "nmse_db", "stderr_db", "trials", "seconds")
SNR_DEFINITION = ("SNR = mean per-antenna channel power / noise variance, per user "
                  "(unit-power pilots, |F_ij| = 1/sqrt(N))")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a sweep.

    Scene and grid range windows are fractions of the Fraunhofer distance
    unless the ``*_m`` overrides are set. ``sweep_values`` are dB for the SNR
    sweep and Hz for the bandwidth sweep. ``normalize_atoms`` selects the
    norm-scaled OMP correlation (default) or the raw one.
    """

    n_antennas: int = 64
    carrier_hz: float = 300e9
    aperture: str = "nd"
    bandwidth_hz: float = 30e9
    n_subcarriers: int = 16
    n_users: int = 2
    n_paths: int = 3
    range_min_frac: float = 0.2
    range_max_frac: float = 0.9
    range_min_m: float | None = None
    range_max_m: float | None = None
    k_abs_per_m: float = 0.0
    n_pilots: int = 16
    pilot_seed: int = 1
    q_phi: int | None = None
    q_r: int = 5
    normalize_atoms: bool = True
    grid_min_frac: float = 0.2
    grid_max_frac: float = 0.9
    estimators: tuple[str, ...] = ESTIMATORS
    sweep: str = "snr"
    sweep_values: tuple[float, ...] = (0.0, 10.0, 20.0)
    snr_db: float = 10.0
    trials: int = 100
    first_trial: int = 0
    seed: int = 0
    threads: int = 1
    mmse_draws: int = 1000
    orientation: str | None = None
    common_scenes: bool = False
    output: str = "results"

    def __post_init__(self):
        if self.trials < 1:
            raise ContractError("trials must be >= 1")
        if not self.sweep_values:
            raise ContractError("sweep list is empty")
        if self.sweep not in SWEEPS:
            raise ContractError(f"sweep must be one of {SWEEPS}")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown or not self.estimators:
            raise ContractError(f"unknown estimators {sorted(unknown)}; choose from {ESTIMATORS}")
        if self.n_paths > self.n_pilots:
            raise ContractError("OMP needs n_paths <= n_pilots")
        self.array()  # validates the array sub-config
        OfdmGrid(self.carrier_hz, self.bandwidth_hz, self.n_subcarriers)

    def array(self) -> ArrayConfig:
        return ArrayConfig(self.n_antennas, self.carrier_hz, aperture=self.aperture)

    def scene_window(self) -> tuple[float, float]:
        f = fraunhofer_distance(self.array())
        return (self.range_min_m if self.range_min_m is not None else self.range_min_frac * f,
                self.range_max_m if self.range_max_m is not None else self.range_max_frac * f)

    def grid_window(self) -> tuple[float, float]:
        f = fraunhofer_distance(self.array())
        return self.grid_min_frac * f, self.grid_max_frac * f


def desk_profile(**overrides) -> ExperimentConfig:
    """Laptop-scale profile: N=64, M=16, K=2, L=3, P=16, ranges in [0.2 F, 0.9 F]."""
    return ExperimentConfig(**overrides)


def paper_profile(**overrides) -> ExperimentConfig:
    """Full-scale profile: N=256, M=128, K=8, L=3, P=8, Q=10N, ranges 5-30 m."""
    base = dict(n_antennas=256, n_subcarriers=128, n_users=8, n_pilots=8,
                range_min_m=5.0, range_max_m=30.0, grid_min_frac=0.05, grid_max_frac=1.0)
    base.update(overrides)
    return ExperimentConfig(**base)


PROFILES = {"desk": desk_profile, "paper": paper_profile}


@dataclass
class Cell:
    sweep_value: float
    estimator: str
    nmse_db: float
    stderr_db: float
    trials: int
    seconds: float
    nmse_linear: float = math.nan
    stderr_linear: float = math.nan


@dataclass
class SweepResult:
    config: ExperimentConfig
    cells: list[Cell] = field(default_factory=list)
    per_trial: dict = field(default_factory=dict)       # (point, estimator) -> array of NMSE
    residual_monotone: dict = field(default_factory=dict)  # (point, estimator) -> bool array
    errors: dict = field(default_factory=dict)          # (point, estimator) -> [messages]
    orientation: str = ""
    orientation_checks: list = field(default_factory=list)
    pilot_uses: dict = field(default_factory=dict)

    def cell(self, sweep_value: float, estimator: str) -> Cell:
        for c in self.cells:
            if c.sweep_value == sweep_value and c.estimator == estimator:
                return c
        raise KeyError((sweep_value, estimator))


def trial_seed(master: int, point: int | None, trial: int) -> np.random.SeedSequence:
    """Stable per-cell seed; independent of execution order and thread count."""
    key = [master, trial] if point is None else [master, point, trial]
    return np.random.SeedSequence(key)


def resolve_threads(requested: int | None = None) -> int:
    env = os.environ.get("NBAOMP_THREADS")
    if env:
        return max(1, int(env))
    return max(1, requested or 1)


class _Point:
    """Per sweep-point state shared read-only by all trials."""

    def __init__(self, cfg: ExperimentConfig, arr: ArrayConfig, bandwidth: float,
                 orientation: str):
        self.ofdm = OfdmGrid(cfg.carrier_hz, bandwidth, cfg.n_subcarriers)
        g_lo, g_hi = cfg.grid_window()
        grid = build_grid(cfg.q_phi or 2 * cfg.n_antennas, cfg.q_r, g_lo, g_hi, arr)
        self.pilot = make_pilot_config(cfg.pilot_seed, cfg.n_pilots, cfg.n_antennas)
        self.full_pilot = make_pilot_config([cfg.pilot_seed, 1], cfg.n_antennas,
                                            cfg.n_antennas, design="orthogonal")
        m = cfg.n_subcarriers
        self.dicts = {}
        if "nba-omp" in cfg.estimators:
            d = build_nba_dictionary(grid, self.ofdm, arr, orientation)
            self.dicts["nba-omp"] = (d, d.projected(self.pilot.beamformer))
        for name, family in (("nf-omp", "nearfield"), ("ff-omp", "farfield")):
            if name in cfg.estimators:
                d = build_si_dictionary(grid, arr, family, m)
                self.dicts[name] = (d, d.projected(self.pilot.beamformer, m))


def _draw(cfg: ExperimentConfig, arr: ArrayConfig, pt: _Point, point: int, snr_db: float,
          trial: int):
    """Scene, channel, noise levels and observations for one trial."""
    scene_ss = trial_seed(cfg.seed, None if cfg.common_scenes else point, trial)
    noise_ss, full_noise_ss, mmse_ss = trial_seed(cfg.seed, point, trial).spawn(3)
    scene = draw_scene(scene_ss, cfg.n_users, cfg.n_paths, cfg.scene_window(),
                       cfg.k_abs_per_m, arr)
    h = assemble_channel(scene, pt.ofdm, arr).h
    var = noise_var_for_snr(h, snr_db)
    y = observe(pt.pilot, h, noise_ss, noise_var=var)
    y_full = None
    if "ls" in cfg.estimators or "mmse" in cfg.estimators:
        y_full = observe(pt.full_pilot, h, full_noise_ss, noise_var=var)
    return scene, h, var, y, y_full, mmse_ss


def _run_trial(cfg: ExperimentConfig, arr: ArrayConfig, pt: _Point, point: int,
               snr_db: float, trial: int):
    scene, h, var, y, y_full, mmse_ss = _draw(cfg, arr, pt, point, snr_db, trial)
    out = {}
    for est in cfg.estimators:
        t0 = time.perf_counter()
        try:
            users = estimate_users(est, cfg, arr, pt, scene, y, y_full, var, mmse_ss)
            value = nmse_linear(h, np.stack([u.h_hat for u in users]))
            monotone = all(_monotone(u.residual_norms) for u in users)
            err = None
        except (ContractError, DomainError, np.linalg.LinAlgError) as exc:
            value, monotone, err = math.nan, True, f"trial {trial}: {exc}"
        out[est] = (value, monotone, time.perf_counter() - t0, err)
    return out


def _monotone(norms) -> bool:
    if len(norms) < 2:
        return True
    return bool(np.all(np.diff(norms) <= 1e-12 * max(norms[0], 1e-300)))


def estimate_users(est, cfg, arr, pt, scene, y, y_full, var, mmse_ss) -> list[UserEstimate]:
    """Run one estimator for every user of a trial."""
    k_users = y.shape[0]
    if est in ("nba-omp", "nf-omp", "ff-omp"):
        d, proj = pt.dicts[est]
        run = nba_omp if est == "nba-omp" else baseline_omp
        return [run(y[k], d, pt.pilot, cfg.n_paths, proj=proj, normalize=cfg.normalize_atoms)
                for k in range(k_users)]
    if est == "ls":
        h_hat = ls_estimate(y_full, pt.full_pilot)
        return [UserEstimate("ls", h_hat[k], pilot_uses=cfg.n_antennas) for k in range(k_users)]
    if est == "mmse":
        seeds = mmse_ss.spawn(k_users)
        users = []
        for k in range(k_users):
            cov = genie_covariance(scene.users[k], pt.ofdm.freqs_hz, arr, scene.k_abs_per_m,
                                   cfg.mmse_draws, seeds[k])
            h_hat = mmse_estimate(y_full[k], pt.full_pilot, cov, noise_var=var[k])
            users.append(UserEstimate("mmse", h_hat, pilot_uses=cfg.n_antennas))
        return users
    raise ContractError(f"unknown estimator {est!r}")


def estimate_once(cfg: ExperimentConfig, snr_db: float | None = None):
    """One realization (sweep point 0, trial ``cfg.first_trial``) with every estimator.

    Returns ``(scene, h, reports)`` where ``reports`` maps estimator name to
    :class:`EstimateReport`.
    """
    arr = cfg.array()
    orientation = cfg.orientation or select_orientation(cfg)[0]
    pt = _Point(cfg, arr, cfg.bandwidth_hz, orientation)
    snr = cfg.snr_db if snr_db is None else snr_db
    scene, h, var, y, y_full, mmse_ss = _draw(cfg, arr, pt, 0, snr, cfg.first_trial)
    reports = {est: EstimateReport(estimate_users(est, cfg, arr, pt, scene, y, y_full, var,
                                                  mmse_ss))
               for est in cfg.estimators}
    return scene, h, reports


def select_orientation(cfg: ExperimentConfig):
    """Run the orientation oracle on a 16-point grid of this config's array and band edge."""
    arr = cfg.array()
    bw = max(cfg.sweep_values) if cfg.sweep == "bandwidth" else cfg.bandwidth_hz
    bw = bw if bw > 0 else 30e9
    ofdm = OfdmGrid(cfg.carrier_hz, bw, cfg.n_subcarriers)
    g_lo, g_hi = cfg.grid_window()
    grid = build_grid(8, 2, g_lo, g_hi, arr)
    return orientation_oracle(arr, ofdm, grid, subcarrier=0)


def run_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Run every (sweep point, trial, estimator) cell of ``cfg``.

    Each trial draws its own scene and noise from :func:`trial_seed`, so the
    outcome is fixed by ``cfg`` (including ``seed``) whatever the thread count.
    """
    arr = cfg.array()
    orientation, checks = select_orientation(cfg)
    if cfg.orientation is not None:
        orientation = cfg.orientation
    result = SweepResult(cfg, orientation=orientation, orientation_checks=checks)
    for est in cfg.estimators:
        result.pilot_uses[est] = cfg.n_pilots if est.endswith("omp") else cfg.n_antennas
    trials = range(cfg.first_trial, cfg.first_trial + cfg.trials)
    threads = resolve_threads(cfg.threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for i, value in enumerate(cfg.sweep_values):
            bandwidth = value if cfg.sweep == "bandwidth" else cfg.bandwidth_hz
            snr_db = value if cfg.sweep == "snr" else cfg.snr_db
            pt = _Point(cfg, arr, bandwidth, orientation)
            outs = list(pool.map(lambda t: _run_trial(cfg, arr, pt, i, snr_db, t), trials))
            for est in cfg.estimators:
                vals = np.array([o[est][0] for o in outs])
                result.per_trial[(i, est)] = vals
                result.residual_monotone[(i, est)] = np.array([o[est][1] for o in outs])
                errs = [o[est][3] for o in outs if o[est][3]]
                if errs:
                    result.errors[(i, est)] = errs
                seconds = float(sum(o[est][2] for o in outs))
                result.cells.append(_summarize(value, est, vals, seconds))
    return result


def _summarize(value: float, est: str, vals: np.ndarray, seconds: float) -> Cell:
    ok = vals[np.isfinite(vals)]
    n = ok.size
    if n == 0:
        return Cell(float(value), est, math.nan, math.nan, 0, seconds)
    mean = float(np.mean(ok))
    se = float(np.std(ok, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    mean_db = 10 * math.log10(mean) if mean > 0 else -math.inf
    se_db = 10 / math.log(10) * se / mean if mean > 0 else math.nan
    return Cell(float(value), est, mean_db, se_db, n, seconds, mean, se)


def emit_csv(result: SweepResult, path, manifest: bool = True) -> Path:
    """Write the result table and (by default) a ``<name>.manifest.json`` sidecar."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_FIELDS)
            for c in result.cells:
                w.writerow([repr(c.sweep_value), c.estimator, repr(c.nmse_db), repr(c.stderr_db),
                            c.trials, repr(round(c.seconds, 6))])
        if manifest:
            write_manifest(result, manifest_path(path))
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def manifest_path(csv_path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".manifest.json")


def write_manifest(result: SweepResult, path) -> None:
    cfg = result.config
    omp_uses = [v for k, v in result.pilot_uses.items() if k.endswith("omp")]
    full_uses = [v for k, v in result.pilot_uses.items() if not k.endswith("omp")]
    doc = {
        "config": dataclasses.asdict(cfg),
        "code_version": nbaomp.__version__,
        "kernel_backend": kernels.BACKEND,
        "numpy_version": np.__version__,
        "orientation": result.orientation,
        "orientation_checks": [dataclasses.asdict(c) for c in result.orientation_checks],
        "snr_definition": SNR_DEFINITION,
        "pilot_uses": result.pilot_uses,
        "overhead_ratio": (max(full_uses) / min(omp_uses)) if omp_uses and full_uses else None,
        "errors": {f"{cfg.sweep_values[i]}|{est}": msgs for (i, est), msgs in result.errors.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, tuple):
        return list(obj)
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)}")


def read_csv(path) -> list[Cell]:
    """Parse a file written by :func:`emit_csv` back into cells."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ContractError(f"{path}: unexpected header {reader.fieldnames}")
        return [Cell(float(r["sweep_value"]), r["estimator"], float(r["nmse_db"]),
                     float(r["stderr_db"]), int(r["trials"]), float(r["seconds"]))
                for r in reader]


def _coerce(name: str, raw: str, default):
    raw = raw.strip()
    hint = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}[name]
    if raw.lower() in ("none", "") and "None" in str(hint):
        return None
    if "tuple[str" in str(hint):
        return tuple(s.strip() for s in raw.split(",") if s.strip())
    if "tuple[float" in str(hint):
        return tuple(float(s) for s in raw.split(",") if s.strip())
    if "bool" in str(hint):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if "int" in str(hint) and "float" not in str(hint):
        return int(raw)
    if "float" in str(hint):
        return float(raw)
    return raw


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Build a config from flat ``key = value`` lines (``#`` comments allowed).

    An optional ``profile = desk|paper`` line picks the base profile; every
    other key must be an :class:`ExperimentConfig` field.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    parser.read_string("[run]\n" + text)
    items = dict(parser["run"])
    profile = items.pop("profile", "desk").strip()
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(items) - names
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    values = {k: _coerce(k, v, None) for k, v in items.items()}
    values.update(overrides)
    return PROFILES[profile](**values)


def load_config(path, **overrides) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), **overrides)
