import csv
from pathlib import Path

import numpy as np
import pytest
import yaml

from xbarsim import DeviceModelParams, evaluate, predict_logits
from xbarsim.harness import (CalibrationConfig, ExperimentConfig, RunReport,
                             check_bench_windows, load_device_params,
                             run_cell_benchmark, run_memristor_eval,
                             run_quant_sweep, save_device_params, write_csv)
from xbarsim import cli

from conftest import MASTER_SEED, noiseless


def _mini_config(tmpdir, **overrides) -> ExperimentConfig:
    raw = {
        "master_seed": 99,
        "output_dir": str(tmpdir),
        "bits_sweep": [3],
        "instances": 2,
        "dataset": {"n_train": 400, "n_test": 300},
        "training": {"epochs": 4, "seeds": [0]},
        "calibration": {"cells": 2000, "fit_samples": 2000, "max_evals": 12},
    }
    raw.update(overrides)
    return ExperimentConfig.from_dict(raw)


# -- configuration -----------------------------------------------------------

def test_config_defaults_round_trip(tmp_path):
    cfg = ExperimentConfig()
    assert cfg.converters.adc_full_scale == 1.5e-3
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump({"master_seed": 5, "bits_sweep": [4, 8],
                                    "device": {"g_high_rel_std": 0.05}}))
    loaded = ExperimentConfig.from_yaml(path)
    assert loaded.master_seed == 5
    assert loaded.bits_sweep == [4, 8]
    assert loaded.device.g_high_rel_std == 0.05


def test_config_rejects_unknown_and_invalid():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"no_such_key": 1})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"training": {"bogus": 2}})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"instances": 0})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"bits_sweep": [1]})


def test_device_params_yaml_round_trip(tmp_path):
    params = DeviceModelParams(g_high_rel_std=0.042)
    save_device_params(tmp_path / "dev.yaml", params)
    assert load_device_params(tmp_path / "dev.yaml") == params


# -- cell benchmark ----------------------------------------------------------

def test_cell_benchmark_zero_variance_has_zero_std(default_params):
    p = noiseless(default_params)
    c = 1.0 / (p.v_read_max * p.g_delta)
    rows = run_cell_benchmark(p, c, 500, np.random.default_rng(0))
    for row in rows:
        # every realization is bit-identical; the std can still be ~1 ulp
        # because the sample mean of N equal floats may round
        assert row["min"] == row["max"]
        assert row["std"] <= 1e-12
        assert row["mean"] == pytest.approx(row["min"], rel=1e-12, abs=1e-15)
    by_op = {r["operation"]: r for r in rows}
    assert by_op["1.0 x 1"]["mean"] == pytest.approx(1.0, rel=1e-12)
    assert by_op["1.0 x 0"]["mean"] == 0.0
    assert by_op["1.0 x 0.5"]["mean"] == pytest.approx(0.5, rel=1e-12)


def test_cell_benchmark_deterministic(default_params):
    r1 = run_cell_benchmark(default_params, 8000.0, 1000, np.random.default_rng(1))
    r2 = run_cell_benchmark(default_params, 8000.0, 1000, np.random.default_rng(1))
    assert r1 == r2


def test_window_checker_flags_violations():
    rows = [{"operation": op, "mean": 1.0, "std": 0.05, "min": 0, "max": 2}
            for op in ("1.0 x 1", "0.1 x 1", "0.01 x 1", "1.0 x 0", "1.0 x 0.5")]
    violations = check_bench_windows(rows)
    assert any("1.0 x 0" in v for v in violations)  # |mean| 1.0 >= 5e-3
    assert any("0.1 x 1" in v for v in violations)  # mean outside [0.095, 0.104]


# -- sweep and Monte Carlo eval ---------------------------------------------

def test_quant_sweep_empty_bits_writes_nothing(tmp_path, capsys):
    cfg = _mini_config(tmp_path, bits_sweep=[])
    assert run_quant_sweep(cfg, outdir=tmp_path) is None
    assert "nothing to do" in capsys.readouterr().out
    assert list(Path(tmp_path).glob("*.csv")) == []


def test_sweep_schema_and_aggregates(tmp_path):
    cfg = _mini_config(tmp_path)
    result = run_quant_sweep(cfg, outdir=tmp_path)
    pairs = [(r[0], r[1]) for r in result.aggregates]
    assert ("baseline", "") in pairs
    assert ("qat", 3) in pairs and ("ptq", 3) in pairs

    runs = list(csv.DictReader(open(tmp_path / "quant_sweep_runs.csv")))
    assert {r["method"] for r in runs} == {"baseline", "qat", "ptq"}
    assert (tmp_path / "checkpoints" / "qat_b3_s0.ckpt").exists()
    assert (tmp_path / "curves" / "train_baseline_s0.csv").exists()


def test_memristor_eval_csv_schema_and_aggregates(tmp_path):
    cfg = _mini_config(tmp_path)
    run_quant_sweep(cfg, outdir=tmp_path)
    reports = run_memristor_eval(cfg, outdir=tmp_path)
    assert len(reports) == 1
    report = reports[0]
    assert report.min <= report.mean <= report.max
    assert report.std >= 0

    rows = list(csv.DictReader(open(tmp_path / "memristor_eval_b3.csv")))
    inst = [r for r in rows if r["kind"] == "instance"]
    agg = [r for r in rows if r["kind"] == "aggregate"]
    assert len(inst) == cfg.instances and len(agg) == 1
    # aggregate recomputable from the per-instance rows
    accs = np.array([float(r["accuracy"]) for r in inst])
    assert float(agg[0]["accuracy"]) == pytest.approx(accs.mean(), rel=1e-9)
    assert float(agg[0]["acc_std"]) == pytest.approx(accs.std(), abs=1e-9)
    assert float(agg[0]["acc_min"]) == accs.min()
    assert float(agg[0]["acc_max"]) == accs.max()


def test_memristor_eval_requires_checkpoints(tmp_path):
    cfg = _mini_config(tmp_path)
    with pytest.raises(FileNotFoundError):
        run_memristor_eval(cfg, outdir=tmp_path)


def test_memristor_eval_zero_variance_matches_digital(tmp_path):
    cfg = _mini_config(tmp_path, instances=1)
    sweep = run_quant_sweep(cfg)
    net, obs = sweep.nets[(3, 0)]
    ds_cfg = cfg.dataset
    from xbarsim.datasets import load_dataset
    ds = load_dataset(ds_cfg, cfg.master_seed)

    params0 = noiseless(DeviceModelParams())
    reports = run_memristor_eval(cfg, nets={3: (net, obs)}, device_params=params0)
    analog_acc = reports[0].per_instance[0]
    digital_acc, _ = evaluate(net, ds.x_test, ds.y_test, observers=obs, bits_w=3)
    assert reports[0].digital_reference == digital_acc

    # flips can only come from samples whose digital margin is within the
    # accumulated conversion error; bound the accuracy gap by counting them
    logits = predict_logits(net, ds.x_test, observers=obs, bits_w=3)
    top2 = np.sort(logits, axis=1)[:, -2:]
    margin = top2[:, 1] - top2[:, 0]
    loose = (margin < 0.05).mean()
    assert abs(analog_acc - digital_acc) <= loose + 1e-9


def test_saturation_notice(tmp_path):
    cfg = _mini_config(tmp_path, instances=1,
                       converters={"adc_full_scale": 1e-6})
    sweep = run_quant_sweep(cfg)
    with pytest.warns(UserWarning, match="saturation"):
        run_memristor_eval(cfg, nets={3: sweep.nets[(3, 0)]},
                           device_params=DeviceModelParams())


# -- determinism and reporting ----------------------------------------------

def _run_all(outdir, master_seed=99):
    cfg = _mini_config(outdir, master_seed=master_seed)
    rng_params = DeviceModelParams()
    run_quant_sweep(cfg, outdir=outdir)
    run_memristor_eval(cfg, outdir=outdir, device_params=rng_params)
    from xbarsim.mapping import fit_correction_factor
    rng = np.random.default_rng([cfg.master_seed, 102])
    c = fit_correction_factor(rng_params, cfg.calibration.fit_samples, rng)
    rows = run_cell_benchmark(rng_params, c, cfg.calibration.cells, rng)
    from xbarsim.harness import write_cell_bench_csv, emit_report
    write_cell_bench_csv(Path(outdir) / "cell_bench.csv", rows)
    emit_report(outdir)


def test_csv_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _run_all(a)
    _run_all(b)
    csvs_a = sorted(p.relative_to(a) for p in Path(a).rglob("*.csv"))
    csvs_b = sorted(p.relative_to(b) for p in Path(b).rglob("*.csv"))
    assert csvs_a and csvs_a == csvs_b
    for rel in csvs_a:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_report_renders_figures_next_to_csvs(tmp_path):
    _run_all(tmp_path)
    assert (tmp_path / "summary.csv").exists()
    figures = sorted(p.name for p in (tmp_path / "figures").glob("*.png"))
    assert figures == ["cell_bench.png", "memristor_eval.png", "quant_sweep.png"]


def test_report_on_empty_dir(tmp_path):
    from xbarsim.harness import emit_report
    assert emit_report(tmp_path) == []


# -- CLI ---------------------------------------------------------------------

def test_cli_cell_bench_and_report(tmp_path):
    cfg_path = tmp_path / "config.yaml"
    cfg_path.write_text(yaml.safe_dump({
        "master_seed": 7,
        "output_dir": str(tmp_path / "run"),
        "calibration": {"cells": 2000, "fit_samples": 2000},
    }))
    assert cli.main(["-c", str(cfg_path), "cell-bench"]) == 0
    assert (tmp_path / "run" / "cell_bench.csv").exists()
    assert cli.main(["-c", str(cfg_path), "report"]) == 0
    assert (tmp_path / "run" / "figures" / "cell_bench.png").exists()


def test_cli_rejects_bad_config(tmp_path):
    cfg_path = tmp_path / "bad.yaml"
    cfg_path.write_text(yaml.safe_dump({"instances": -3}))
    assert cli.main(["-c", str(cfg_path), "cell-bench"]) == 1


def test_cli_memristor_eval_without_checkpoints(tmp_path):
    cfg_path = tmp_path / "config.yaml"
    cfg_path.write_text(yaml.safe_dump({"output_dir": str(tmp_path / "run"),
                                        "bits_sweep": [3]}))
    assert cli.main(["-c", str(cfg_path), "memristor-eval"]) == 1


def test_run_report_invariants():
    report = RunReport("bits=3", [0.9, 0.85, 0.95], 0.92, [0.0, 0.0, 0.0], 1.0)
    assert report.min <= report.mean <= report.max
    em, es, emin, emax = report.error_stats()
    assert em == pytest.approx(1 - report.mean)
    assert emin == pytest.approx(1 - report.max)
