"""Render report figures from the harness CSVs.

Figures are a convenience view next to the delimited outputs; the CSVs remain
the canonical, determinism-checked artifacts.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def _fig_cell_bench(rows, path):
    ops = [r["operation"] for r in rows]
    means = [float(r["mean"]) for r in rows]
    stds = [float(r["std"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(range(len(ops)), means, yerr=stds, capsize=4, color="#4878a8")
    ax.set_xticks(range(len(ops)), ops, rotation=20)
    ax.set_ylabel("corrected readout")
    ax.set_title("paired-cell benchmark (10k cells)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _fig_quant_sweep(rows, path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for method, color in (("ptq", "#c44e52"), ("qat", "#55a868")):
        pts = sorted((int(r["bits"]), float(r["acc_mean"]), float(r["acc_std"]))
                     for r in rows if r["method"] == method and r["bits"])
        if pts:
            bits, acc, std = zip(*pts)
            ax.errorbar(bits, acc, yerr=std, marker="o", label=method.upper(),
                        color=color, capsize=3)
    base = [float(r["acc_mean"]) for r in rows if r["method"] == "baseline"]
    if base:
        ax.axhline(base[0], ls="--", color="gray", label="float baseline")
    ax.set_xlabel("weight bits")
    ax.set_ylabel("test accuracy")
    ax.legend()
    ax.set_title("PTQ vs QAT")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _fig_memristor_eval(rows, path):
    rows = sorted(rows, key=lambda r: int(r["bits"]))
    bits = [int(r["bits"]) for r in rows]
    mean = [float(r["acc_mean"]) for r in rows]
    std = [float(r["acc_std"]) for r in rows]
    lo = [m - float(r["acc_min"]) for m, r in zip(mean, rows)]
    hi = [float(r["acc_max"]) - m for m, r in zip(mean, rows)]
    digital = [float(r["digital_accuracy"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.errorbar(bits, mean, yerr=[lo, hi], fmt="none", ecolor="#aaaaaa",
                capsize=5, label="min/max over instances")
    ax.errorbar(bits, mean, yerr=std, marker="o", color="#4878a8", capsize=3,
                label="analog mean +- std")
    ax.plot(bits, digital, ls="--", marker="x", color="#55a868", label="digital fake-quant")
    ax.set_xlabel("weight bits")
    ax.set_ylabel("test accuracy")
    ax.legend()
    ax.set_title("Monte Carlo device instances")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_figures(outdir) -> list:
    """Render every figure whose source CSV exists; returns written paths."""
    outdir = Path(outdir)
    figdir = outdir / "figures"
    written = []
    sources = [
        ("cell_bench.csv", "cell_bench.png", _fig_cell_bench),
        ("quant_sweep.csv", "quant_sweep.png", _fig_quant_sweep),
        ("memristor_eval.csv", "memristor_eval.png", _fig_memristor_eval),
    ]
    for src, dst, fn in sources:
        src_path = outdir / src
        if src_path.exists():
            figdir.mkdir(parents=True, exist_ok=True)
            written.append(fn(_read_rows(src_path), figdir / dst))
    return written
