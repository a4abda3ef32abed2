"""Command-line entry point: ``nbaomp <subcommand> [options]``."""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

from nbaomp import harness
from nbaomp.beamsplit import gain_map, write_gain_map
from nbaomp.channel import OfdmGrid, write_scene
from nbaomp.errors import ContractError, DomainError
from nbaomp.estimators import nmse
from nbaomp.geometry import ArrayConfig, PolarPoint
from nbaomp.validation import format_table, run_checks

class UsageError(Exception):
    """Bad flags or a malformed config file (exit status 2)."""


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits: {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _float_list(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--profile", choices=sorted(harness.PROFILES),
                   help="base parameter set (overridden by --config profile key and flags)")
    p.add_argument("--seed", type=_u64, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--threads", type=_positive_int,
                   help="worker threads (NBAOMP_THREADS overrides)")
    p.add_argument("--estimators", help=f"comma list from {','.join(harness.ESTIMATORS)}")
    p.add_argument("--trials", type=_positive_int, help="Monte-Carlo trials per sweep point")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nbaomp",
                                     description="Wideband near-field channel estimation sweeps")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep-snr", help="NMSE versus SNR")
    _common(p)
    p.add_argument("--snr", type=_float_list, help="SNR points in dB, comma separated")

    p = sub.add_parser("sweep-bandwidth", help="NMSE versus bandwidth")
    _common(p)
    p.add_argument("--bandwidths", type=_float_list, help="bandwidths in Hz, comma separated")
    p.add_argument("--snr", type=float, help="fixed SNR in dB")

    p = sub.add_parser("gain-map", help="per-subcarrier array gain over a Cartesian window")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--far-field", action="store_true", help="place the user at 6000 m")
    p.add_argument("--phi", type=float, default=math.sin(math.pi / 4), help="user sin(angle)")
    p.add_argument("--range", dest="range_m", type=float, help="user range in m")
    p.add_argument("--n-antennas", type=_positive_int, default=256)
    p.add_argument("--subcarriers", type=_positive_int, default=3)
    p.add_argument("--carrier", type=float, default=300e9, help="carrier in Hz")
    p.add_argument("--bandwidth", type=float, default=30e9, help="bandwidth in Hz")
    p.add_argument("--half-width", type=float,
                   help="half side of the square window around the user, m")
    p.add_argument("--resolution", type=_positive_int, default=201, help="cells per side")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("estimate-once", help="one realization, full estimate report")
    _common(p)
    p.add_argument("--snr", type=float, help="SNR in dB")

    p = sub.add_parser("validate", help="oracle, orientation and invariant self-checks")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args, **extra) -> harness.ExperimentConfig:
    overrides = dict(extra)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.estimators:
        overrides["estimators"] = tuple(e.strip() for e in args.estimators.split(",") if e.strip())
    if args.out is not None:
        overrides["output"] = str(args.out)
    try:
        if args.config is not None:
            text = _read(args.config)
            if args.profile and "profile" not in _keys(text):
                text = f"profile = {args.profile}\n" + text
            return harness.parse_config(text, **overrides)
        return harness.PROFILES[args.profile or "desk"](**overrides)
    except (configparser.Error, ValueError, TypeError) as exc:
        # Includes ContractError / DomainError from the config's own invariants.
        raise UsageError(f"invalid configuration: {exc}") from exc


def _read(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc


def _keys(text: str) -> set[str]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"malformed config: {exc}") from exc
    return set(parser["run"])


DEFAULT_BANDWIDTHS_HZ = (5e9, 15e9, 30e9, 50e9)


def _sweep(args, kind: str) -> int:
    extra = {"sweep": kind}
    in_file = args.config is not None and "sweep_values" in _keys(_read(args.config))
    if kind == "snr":
        if args.snr is not None:
            extra["sweep_values"] = args.snr
    else:
        if args.bandwidths is not None:
            extra["sweep_values"] = args.bandwidths
        elif not in_file:
            extra["sweep_values"] = DEFAULT_BANDWIDTHS_HZ
        if args.snr is not None:
            extra["snr_db"] = args.snr
    cfg = resolve_config(args, **extra)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    result = harness.run_sweep(cfg)
    path = harness.emit_csv(result, out / f"nmse_vs_{kind}.csv")
    for (i, est), msgs in result.errors.items():
        print(f"warning: {est} at {cfg.sweep_values[i]}: {len(msgs)} failed trials", file=sys.stderr)
    _print_cells(result.cells, kind)
    print(f"wrote {path} and {harness.manifest_path(path)}")
    return 0


def _print_cells(cells, kind: str) -> None:
    unit = "dB" if kind == "snr" else "Hz"
    print(f"{kind + ' (' + unit + ')':>16}  {'estimator':<8}  {'NMSE dB':>9}  {'+/-':>6}  trials")
    for c in cells:
        print(f"{c.sweep_value:>16.6g}  {c.estimator:<8}  {c.nmse_db:>9.3f}  {c.stderr_db:>6.3f}  "
              f"{c.trials}")


def _gain_map(args) -> int:
    r = args.range_m if args.range_m is not None else (6000.0 if args.far_field else 6.0)
    cfg = ArrayConfig(args.n_antennas, args.carrier)
    grid = OfdmGrid(args.carrier, args.bandwidth, args.subcarriers)
    user = PolarPoint(args.phi, r)
    half = args.half_width if args.half_width is not None else (400.0 if r > 100 else 1.5)
    ux, uy = user.to_cartesian()
    window = (ux - half, ux + half, uy - half, uy + half)
    gm = gain_map(cfg, grid, user, window, (args.resolution, args.resolution))
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / ("gain_map_far.csv" if args.far_field else "gain_map.csv")
    write_gain_map(gm, path)
    for m, (x, y, g) in enumerate(gm.argmax_cells()):
        cell = PolarPoint.from_cartesian(x, y)
        print(f"m={m + 1} f={gm.freqs_hz[m] / 1e9:.3f} GHz peak x={x:.4f} y={y:.4f} "
              f"phi={cell.phi:.5f} r={cell.range_m:.4f} gain={g:.6f}")
    print(f"wrote {path}")
    return 0


def _estimate_once(args) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    scene, h, reports = harness.estimate_once(cfg, args.snr)
    write_scene(scene, out / "scene.csv")
    with (out / "estimate.jsonl").open("w") as fh:
        for est, report in reports.items():
            for rec in report.records(h):
                fh.write(json.dumps(rec, allow_nan=False, default=float) + "\n")
    (out / "estimate_config.json").write_text(
        json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True) + "\n")
    for est, report in reports.items():
        print(f"{est:<8} NMSE {nmse(h, report.h_hat):8.3f} dB")
    print(f"wrote {out / 'scene.csv'} and {out / 'estimate.jsonl'}")
    return 0


def _validate(args) -> int:
    checks = run_checks(args.seed)
    print(format_table(checks))
    return 0 if all(c.passed for c in checks) else 1


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "sweep-snr": lambda a: _sweep(a, "snr"),
        "sweep-bandwidth": lambda a: _sweep(a, "bandwidth"),
        "gain-map": _gain_map,
        "estimate-once": _estimate_once,
        "validate": _validate,
    }
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"nbaomp: error: {exc}", file=sys.stderr)
        return 2
    except (ContractError, DomainError) as exc:
        print(f"nbaomp: contract error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"nbaomp: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
