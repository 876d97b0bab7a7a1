"""Figure rendering for sweep results.

Reads the result CSV written by the experiment driver and renders summary
figures (mean correlation and rotation-invariant error versus feedback
rounds, wall time per algorithm) as PNG files next to the delimited output.
"""

from __future__ import annotations

import csv
import os
import numpy as np

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


def _load(csv_path):
    with open(csv_path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"{csv_path} has no result rows")
    return rows


def _mean_by_alg_t(rows, column):
    acc = {}
    for r in rows:
        acc.setdefault((r["algorithm"], int(r["T"])), []).append(float(r[column]))
    return {k: float(np.mean(v)) for k, v in acc.items()}


def _series(table, alg):
    ts = sorted(t for (a, t) in table if a == alg and t > 0)
    return ts, [table[(alg, t)] for t in ts]


def _plot_metric(table, ylabel, path, baseline_key=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    algs = sorted({a for (a, _) in table})
    for alg in algs:
        if alg == "type1_baseline":
            continue
        ts, vals = _series(table, alg)
        if ts:
            ax.plot(ts, vals, marker="o", label=alg)
    if baseline_key and baseline_key in table:
        ax.axhline(table[baseline_key], color="gray", linestyle="--",
                   label="type1 codeword")
    ax.set_xlabel("feedback rounds T")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_result_figures(csv_path, out_dir) -> list[str]:
    """Render the standard summary figures; returns the written file paths."""
    rows = _load(csv_path)
    os.makedirs(out_dir, exist_ok=True)
    written = []

    corr = _mean_by_alg_t(rows, "correlation")
    written.append(_plot_metric(
        corr, "mean correlation",
        os.path.join(out_dir, "correlation_vs_rounds.png"),
        baseline_key=("type1_baseline", 0)))

    nmse = _mean_by_alg_t(rows, "nmse_r")
    nmse_db = {k: 20 * np.log10(max(v, 1e-12)) for k, v in nmse.items()}
    written.append(_plot_metric(
        nmse_db, "rotation-invariant error (dB)",
        os.path.join(out_dir, "nmse_vs_rounds.png"),
        baseline_key=("type1_baseline", 0)))

    wall = _mean_by_alg_t(rows, "wall_time_s")
    algs = sorted({a for (a, _) in wall if a != "type1_baseline"})
    if algs:
        fig, ax = plt.subplots(figsize=(6, 4))
        means = [float(np.mean([v for (a, _), v in wall.items() if a == alg]))
                 for alg in algs]
        ax.bar(range(len(algs)), means)
        ax.set_xticks(range(len(algs)))
        ax.set_xticklabels(algs, rotation=20, ha="right", fontsize=8)
        ax.set_ylabel("mean wall time per solve (s)")
        fig.tight_layout()
        path = os.path.join(out_dir, "wall_time.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
