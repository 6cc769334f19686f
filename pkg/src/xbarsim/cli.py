"""Command-line experiment runner.

Subcommands: calibrate, cell-bench, quant-sweep, memristor-eval, report.
Exit codes: 0 success, 1 validation error, 2 calibration tolerance failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness
from .harness import ExperimentConfig
from .mapping import fit_correction_factor


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_yaml(args.config)
    else:
        cfg = ExperimentConfig()
    if args.out:
        cfg.output_dir = args.out
    return cfg


def _device_params(cfg, outdir: Path):
    """Calibrated parameters when present, config defaults otherwise."""
    calibrated = outdir / "calibrated_device.yaml"
    if calibrated.exists():
        return harness.load_device_params(calibrated)
    return cfg.device


def cmd_calibrate(cfg: ExperimentConfig) -> int:
    outdir = Path(cfg.output_dir)
    result = harness.calibrate(cfg.device, cfg.calibration, cfg.master_seed)
    harness.save_device_params(outdir / "calibrated_device.yaml", result.params)
    harness.write_csv(
        outdir / "calibration.csv",
        ["evals", "g_high_rel_std", "g_low_rel_std", "g_half_rel_std",
         "nonlin_alpha", "objective"],
        [[n, p["g_high_rel_std"], p["g_low_rel_std"], p["g_half_rel_std"],
          p["nonlin_alpha"], score] for n, p, score in result.history])
    harness.write_cell_bench_csv(outdir / "cell_bench.csv", result.bench_rows)
    print(f"calibrated in {result.evals} evaluations, objective {result.objective:.4g}")
    print(f"correction factor {result.correction_factor:.1f} 1/A")
    if result.violations:
        for v in result.violations:
            print(f"TOLERANCE FAILURE {v}", file=sys.stderr)
        return 2
    return 0


def cmd_cell_bench(cfg: ExperimentConfig) -> int:
    outdir = Path(cfg.output_dir)
    params = _device_params(cfg, outdir)
    rng = np.random.default_rng([cfg.master_seed, harness.SEED_CELLBENCH])
    c = fit_correction_factor(params, cfg.calibration.fit_samples, rng)
    rows = harness.run_cell_benchmark(params, c, cfg.calibration.cells, rng)
    harness.write_cell_bench_csv(outdir / "cell_bench.csv", rows)
    for r in rows:
        print(f"{r['operation']:>10}: mean={r['mean']:+.4g} std={r['std']:.4g} "
              f"min={r['min']:+.4g} max={r['max']:+.4g}")
    return 0


def cmd_quant_sweep(cfg: ExperimentConfig) -> int:
    result = harness.run_quant_sweep(cfg, outdir=cfg.output_dir)
    if result is None:
        return 0
    for method, bits, n, mean, *_ in result.aggregates:
        label = f"{method} b={bits}" if bits != "" else method
        print(f"{label:>12}: accuracy {mean:.4f} over {n} seeds")
    return 0


def cmd_memristor_eval(cfg: ExperimentConfig) -> int:
    outdir = Path(cfg.output_dir)
    params = _device_params(cfg, outdir)
    reports = harness.run_memristor_eval(cfg, outdir=outdir, device_params=params)
    for report in reports:
        print(f"{report.label}: analog acc {report.mean:.4f} +- {report.std:.4f} "
              f"[{report.min:.4f}, {report.max:.4f}] digital {report.digital_reference:.4f}")
    return 0


def cmd_report(cfg: ExperimentConfig) -> int:
    written = harness.emit_report(cfg.output_dir)
    if not written:
        print(f"report: no harness CSVs found under {cfg.output_dir}")
    for path in written:
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "calibrate": cmd_calibrate,
    "cell-bench": cmd_cell_bench,
    "quant-sweep": cmd_quant_sweep,
    "memristor-eval": cmd_memristor_eval,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="xbarsim",
        description="memristor crossbar simulation experiments")
    parser.add_argument("-c", "--config", help="YAML experiment config")
    parser.add_argument("-o", "--out", help="override the output directory")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        return _COMMANDS[args.command](cfg)
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
