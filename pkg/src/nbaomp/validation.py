"""Quick self-checks behind ``nbaomp validate``: oracles, orientation and OMP invariants."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nbaomp import kernels
from nbaomp.beamsplit import (array_gain_direct, array_gain_sinc, physical_from_spatial,
                              spatial_from_physical)
from nbaomp.channel import OfdmGrid
from nbaomp.dictionary import (build_grid, build_nba_dictionary, build_si_dictionary,
                               default_orientation, orientation_oracle)
from nbaomp.estimators import make_pilot_config, nba_omp, selection_objective
from nbaomp.geometry import (ArrayConfig, PolarPoint, exact_steering_matrix,
                             fraunhofer_distance, fresnel_steering, steering_vector)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def _fraunhofer() -> Check:
    f = fraunhofer_distance(ArrayConfig(256, 300e9))
    rel = abs(f - 32.76) / 32.76
    return Check("fraunhofer distance N=256", rel <= 1e-3, f"{f:.4f} m (rel. dev. {rel:.1e})")


def _orientation() -> Check:
    cfg = ArrayConfig(64, 300e9)
    f = fraunhofer_distance(cfg)
    grid = build_grid(8, 2, 0.2 * f, 0.9 * f, cfg)
    best, checks = orientation_oracle(cfg, OfdmGrid(300e9, 30e9, 8), grid)
    scores = ", ".join(f"{c.orientation} {c.hits}/{c.total}" for c in checks)
    ok = best == default_orientation() and any(c.passed for c in checks if c.orientation == best)
    return Check("dictionary orientation oracle", ok, f"selected {best} ({scores})")


def _support_alignment() -> Check:
    cfg = ArrayConfig(64, 300e9)
    ofdm = OfdmGrid(300e9, 30e9, 8)
    f = fraunhofer_distance(cfg)
    grid = build_grid(32, 4, 0.2 * f, 0.9 * f, cfg)
    d = build_nba_dictionary(grid, ofdm, cfg)
    si = build_si_dictionary(grid, cfg, "nearfield")
    bad_nba = bad_si = 0
    for q in range(grid.size):
        for m, fm in enumerate(ofdm.freqs_hz):
            truth = steering_vector(cfg, grid.point(q), fm, "exact")
            bad_nba += not _attains_max(np.abs(d.matrix(m).conj().T @ truth), q)
            bad_si += not _attains_max(np.abs(si.matrix().conj().T @ truth), q)
    return Check("NBA support alignment", bad_nba == 0,
                 f"misaligned (point, subcarrier) pairs: NBA {bad_nba}, SI {bad_si}")


def _attains_max(corr: np.ndarray, q: int) -> bool:
    # Columns at |phi| = 1 coincide for every range, so ties count as aligned.
    return bool(corr[q] >= corr.max() * (1 - 1e-12))


def _dirichlet(rng) -> Check:
    cfg = ArrayConfig(256, 300e9)
    worst = 0.0
    for _ in range(200):
        phi, phi_bar = rng.uniform(-1, 1, 2)
        f_m = rng.uniform(285e9, 315e9)
        u = fresnel_steering(cfg, phi, 0.0, 300e9)
        v = fresnel_steering(cfg, phi_bar, 0.0, f_m)
        direct = array_gain_direct(u, v)
        closed = array_gain_sinc(cfg, phi, 0.0, phi_bar, 0.0, 300e9, f_m)
        worst = max(worst, abs(direct - closed) / max(direct, 1e-300))
    return Check("Dirichlet closed form (far field)", worst <= 1e-10, f"max rel. err {worst:.1e}")


def _fresnel(rng) -> Check:
    cfg = ArrayConfig(256, 300e9)
    f = fraunhofer_distance(cfg)
    worst = 1.0
    for _ in range(200):
        p = PolarPoint(rng.uniform(-1, 1), rng.uniform(0.05 * f, f))
        a = steering_vector(cfg, p, 300e9, "exact")
        b = steering_vector(cfg, p, 300e9, "fresnel")
        worst = min(worst, abs(np.vdot(a, b)) / cfg.n_antennas)
    return Check("Fresnel approximation regime", worst >= 0.95, f"min correlation {worst:.4f}")


def _round_trip(rng) -> Check:
    worst = 0.0
    for _ in range(200):
        p = PolarPoint(rng.uniform(-0.9, 0.9), rng.uniform(1, 30))
        e = rng.uniform(0.95, 1.05)
        back = physical_from_spatial(spatial_from_physical(p, e), e)
        worst = max(worst, abs(back.phi - p.phi), abs(back.range_m - p.range_m) / p.range_m)
    return Check("spatial/physical round trip", worst <= 1e-12, f"max err {worst:.1e}")


def _omp_oracle(rng) -> Check:
    cfg = ArrayConfig(64, 300e9)
    ofdm = OfdmGrid(300e9, 30e9, 8)
    f = fraunhofer_distance(cfg)
    grid = build_grid(32, 4, 0.2 * f, 0.9 * f, cfg)
    d = build_nba_dictionary(grid, ofdm, cfg)
    pilot = make_pilot_config(3, 32, 64)
    proj = d.projected(pilot.beamformer)
    mismatches = idempotence = 0.0
    for _ in range(20):
        p = PolarPoint(rng.uniform(-0.95, 0.95), rng.uniform(0.2 * f, 0.9 * f))
        h = np.stack([steering_vector(cfg, p, fm, "exact") for fm in ofdm.freqs_hz])
        y = h @ pilot.beamformer.T
        est = nba_omp(y, d, pilot, 1, proj=proj)
        brute = int(np.argmax(selection_objective(y, proj)))
        mismatches += int(est.support[0] != brute)
        psi = proj[:, :, est.support]
        proj_mat = psi @ np.linalg.pinv(psi)
        idempotence = max(idempotence, float(np.abs(proj_mat @ proj_mat - proj_mat).max()))
    ok = mismatches == 0 and idempotence <= 1e-10
    return Check("OMP brute-force oracle and projection", ok,
                 f"mismatches {int(mismatches)}/20, idempotence err {idempotence:.1e}")


def _kernels(rng) -> Check:
    from nbaomp import _kernels_py
    cfg = ArrayConfig(64, 300e9)
    phi = rng.uniform(-1, 1, 50)
    zeta = rng.uniform(0, 0.1, 50)
    k = cfg.wavenumber(300e9)
    a = kernels.fresnel_matrix(cfg.offsets_m, phi, zeta, k)
    b = _kernels_py.fresnel_matrix(cfg.offsets_m, phi, zeta, k)
    u = exact_steering_matrix(cfg, [PolarPoint(0.3, 2.0)], 300e9)[:, 0]
    g1 = kernels.gain_cells(u, cfg.offsets_m, phi, zeta, k)
    g2 = _kernels_py.gain_cells(u, cfg.offsets_m, phi, zeta, k)
    err = max(float(np.abs(a - b).max()), float(np.abs(g1 - g2).max()))
    return Check(f"kernel backend agreement ({kernels.BACKEND})", err <= 1e-9, f"max diff {err:.1e}")


def run_checks(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    return [_fraunhofer(), _orientation(), _support_alignment(), _dirichlet(rng), _fresnel(rng),
            _round_trip(rng), _omp_oracle(rng), _kernels(rng)]


def format_table(checks: list[Check]) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'check':<{width}}  result  detail", "-" * (width + 30)]
    for c in checks:
        lines.append(f"{c.name:<{width}}  {'PASS' if c.passed else 'FAIL':<6}  {c.detail}")
    n_ok = sum(c.passed for c in checks)
    lines.append(f"{n_ok}/{len(checks)} checks passed")
    return "\n".join(lines)

