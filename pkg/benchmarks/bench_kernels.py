"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Both backends are imported
directly, so ``NBAOMP_PURE_PYTHON`` has no effect here.
"""
import argparse
import timeit

import numpy as np

from nbaomp import _kernels_py
from nbaomp.geometry import ArrayConfig, PolarPoint, exact_steering_matrix

try:
    from nbaomp import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def cases(n_antennas: int, n_cells: int, seed: int):
    cfg = ArrayConfig(n_antennas, 300e9)
    rng = np.random.default_rng(seed)
    phi = rng.uniform(-1, 1, n_cells)
    zeta = rng.uniform(0, 0.1, n_cells)
    k = cfg.wavenumber(300e9)
    u = exact_steering_matrix(cfg, [PolarPoint(0.7, 6.0)], 310e9)[:, 0]
    return {
        # Dictionary build: one (N, Q) Fresnel matrix.
        "fresnel_matrix": lambda mod: mod.fresnel_matrix(cfg.offsets_m, phi, zeta, k),
        # Gain map: one gain per cell against a fixed channel.
        "gain_cells": lambda mod: mod.gain_cells(u, cfg.offsets_m, phi, zeta, k),
    }


def best_of(fn, repeat: int) -> float:
    runs = timeit.repeat(fn, number=1, repeat=repeat)
    return min(runs)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-antennas", type=int, default=256)
    ap.add_argument("--cells", type=int, default=40401, help="cells (201 x 201 gain map)")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = {"python": _kernels_py}
    if _kernels_c is not None:
        backends["compiled"] = _kernels_c
    else:
        print("compiled extension not built; timing the numpy fallback only")

    print(f"N = {args.n_antennas}, cells = {args.cells}, best of {args.repeat}")
    print(f"{'kernel':<16}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, run in cases(args.n_antennas, args.cells, args.seed).items():
        times = {b: best_of(lambda m=mod: run(m), args.repeat) for b, mod in backends.items()}
        row = f"{name:<16}" + "".join(f"{times[b] * 1e3:>10.1f}ms" for b in backends)
        if "compiled" in times:
            ref, fast = run(_kernels_py), run(_kernels_c)
            assert np.allclose(ref, fast, rtol=1e-9, atol=1e-12), f"{name}: backends disagree"
            row += f"{times['python'] / times['compiled']:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
