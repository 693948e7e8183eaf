"""Command-line experiment runner.

Subcommands: ``sweep`` (NMSE versus SNR), ``converge`` (per-iteration
Bayesian solver traces), ``spectra`` (naive power-spread maps of a seeded
scene), ``oracle`` (joint-grid equivalence check on small instances).

Exit codes: 0 on success, 1 on configuration errors, 2 when the runtime
failure rate exceeds the configured threshold.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import harness
from .channel import generate_paths, generate_snapshots
from .decomposition import power_spectrum_diagnostics
from .harness import ConfigError

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nearfield",
        description="Near-field planar-array channel estimation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def _common(p):
        p.add_argument("--config", default=None,
                       help="configuration file (key = value, dotted sections)")
        p.add_argument("--preset", choices=("desk", "paper"), default=None,
                       help="committed base configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
        p.add_argument("--out", default="-",
                       help="output path ('-' for stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p_sweep = sub.add_parser("sweep", help="NMSE versus SNR Monte-Carlo sweep")
    _common(p_sweep)
    p_sweep.add_argument("--timing", action="store_true",
                         help="emit measured runtimes (breaks byte-reproducibility)")

    p_conv = sub.add_parser("converge", help="per-iteration solver NMSE traces")
    _common(p_conv)

    p_spec = sub.add_parser("spectra", help="naive angular/distance power spread")
    _common(p_spec)

    p_oracle = sub.add_parser("oracle", help="joint-grid equivalence check")
    _common(p_oracle)
    p_oracle.add_argument("--column-cap", type=int, default=65536,
                          help="maximum joint-dictionary column count")
    return parser


def _load_config(args) -> harness.ExperimentConfig:
    sources = []
    if args.preset:
        sources.append(harness.preset_text(args.preset))
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {args.config}")
        sources.append(path.read_text(encoding="utf-8"))
    if args.seed is not None:
        sources.append(f"seed = {args.seed}")
    if not sources:
        sources.append("")
    return harness.merge_config_sources(*sources)


def _deliver(write_fn, out: str) -> None:
    """Write through ``write_fn(path)``; '-' streams to stdout."""
    if out == "-":
        with tempfile.NamedTemporaryFile("r", suffix=".out", delete=False) as tmp:
            tmp_path = Path(tmp.name)
        try:
            write_fn(tmp_path)
            sys.stdout.write(tmp_path.read_text(encoding="utf-8"))
        finally:
            tmp_path.unlink(missing_ok=True)
    else:
        write_fn(out)


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    t0 = time.perf_counter()
    records = harness.run_sweep(config)
    wall = time.perf_counter() - t0
    _deliver(lambda p: harness.emit(records, args.format, p, timing=args.timing),
             args.out)
    print(harness.sweep_summary(records, config, wall_s=wall), file=sys.stderr)
    if harness.failure_rate(records) > config.sweep.max_failure_rate:
        return 2
    return 0


def _cmd_converge(args) -> int:
    config = _load_config(args)
    records = harness.run_convergence(config)
    if not records:
        print("no convergence records produced (all trials failed)",
              file=sys.stderr)
        return 2
    _deliver(lambda p: harness.emit_convergence(records, args.format, p), args.out)
    return 0


def _cmd_spectra(args) -> int:
    config = _load_config(args)
    geom = config.make_geometry()
    az_grid, el_grid, r_grid = config.make_grids()
    seed = harness.child_seed(config.seed, 0, 0)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    finite_r = r_grid.values[np.isfinite(r_grid.values)]
    paths = generate_paths(rng, config.make_scene(),
                           omega_y_values=az_grid.values,
                           omega_z_values=el_grid.values, r_values=finite_r)
    ens = generate_snapshots(geom, paths, config.estimation.snapshots,
                             config.sweep.snr_db[0],
                             wavefront=config.scene.wavefront, seed=seed,
                             gain_model=config.scene.gain_model)
    spectra = power_spectrum_diagnostics(ens, az_grid.values, el_grid.values,
                                         r_grid.values)

    def _write_json(path):
        payload = {
            "omega_y": spectra.omega_y_values.tolist(),
            "omega_z": spectra.omega_z_values.tolist(),
            "r": ["inf" if math.isinf(v) else v for v in spectra.r_values],
            "angular": spectra.angular.tolist(),
            "distance": spectra.distance.tolist(),
            "at_r": spectra.at_r,
            "along": list(spectra.along),
            "true_paths": [{"omega_y": p.cosines()[0], "omega_z": p.cosines()[1],
                            "distance_r": "inf" if p.is_far_field else p.distance_r,
                            "power": p.power} for p in ens.paths],
            "seed": seed,
        }
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(json.dumps(payload, indent=2) + "\n")

    def _write_csv(path):
        lines = ["spectrum,omega_y,omega_z,r,value"]
        for i, oz in enumerate(spectra.omega_z_values):
            for j, oy in enumerate(spectra.omega_y_values):
                lines.append(f"angular,{oy:.6g},{oz:.6g},{spectra.at_r:.6g},"
                             f"{spectra.angular[i, j]:.6g}")
        for i, r in enumerate(spectra.r_values):
            r_txt = "inf" if math.isinf(r) else f"{r:.6g}"
            lines.append(f"distance,{spectra.along[0]:.6g},{spectra.along[1]:.6g},"
                         f"{r_txt},{spectra.distance[i]:.6g}")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")

    _deliver(_write_json if args.format == "json" else _write_csv, args.out)
    return 0


def _cmd_oracle(args) -> int:
    config = _load_config(args)
    records = harness.run_oracle_check(config, column_cap=args.column_cap)
    _deliver(lambda p: harness.emit_oracle(records, args.format, p), args.out)
    mismatches = sum(1 for r in records if not r.match)
    print(f"oracle equivalence: {len(records) - mismatches}/{len(records)} matched; "
          f"columns decomposed={records[0].dere_columns} "
          f"joint={records[0].oracle_columns}", file=sys.stderr)
    if records and mismatches / len(records) > config.sweep.max_failure_rate:
        return 2
    return 0


_COMMANDS = {
    "sweep": _cmd_sweep,
    "converge": _cmd_converge,
    "spectra": _cmd_spectra,
    "oracle": _cmd_oracle,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure outside per-trial handling
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
