"""Figure rendering for the CLI report paths.

Every report that lands in a file gets a companion PNG next to it. All
plotting is headless (Agg) and deterministic.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_loss_curve(epoch_losses, path, accuracy=None):
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(np.arange(1, len(epoch_losses) + 1), epoch_losses, marker="o", ms=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    title = "training loss"
    if accuracy is not None:
        title += f"  (final accuracy {accuracy:.4f})"
    ax.set_title(title)
    ax.grid(alpha=0.3)
    _finish(fig, path)


def save_compression_chart(report, path):
    names = [l.name for l in report.layers] + ["model"]
    ratios = [float(l.ratio) for l in report.layers] + [float(report.model_ratio)]
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.bar(range(len(names)), ratios, color=["#4878d0"] * (len(names) - 1) + ["#d65f5f"])
    ax.set_xticks(range(len(names)), names, rotation=30, ha="right")
    ax.set_ylabel(f"storage ratio ({report.baseline_bits}b dense / "
                  f"{report.compressed_bits}b circulant)")
    ax.set_title("weight storage reduction")
    ax.grid(axis="y", alpha=0.3)
    _finish(fig, path)


def save_exploration_chart(rows, path, chosen=None):
    fig, axes = plt.subplots(1, 2, figsize=(8.5, 3.2))
    ds = sorted({r["d"] for r in rows})
    for d in ds:
        sub = sorted((r for r in rows if r["d"] == d and r["feasible"]),
                     key=lambda r: r["p"])
        ps = [r["p"] for r in sub]
        axes[0].plot(ps, [r["gops"] for r in sub], label=f"d={d}")
        axes[1].plot(ps, [r["gops_per_w"] for r in sub], label=f"d={d}")
    for ax, ylab in zip(axes, ("equivalent GOPS", "GOPS / W")):
        ax.set_xlabel("parallelization degree p")
        ax.set_ylabel(ylab)
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    if chosen is not None:
        axes[1].axvline(chosen.p_par, color="k", ls="--", lw=0.8)
        axes[1].set_title(f"chosen p={chosen.p_par}, d={chosen.d}")
    _finish(fig, path)


def save_bench_chart(rows, path):
    names = [r["layer"] for r in rows]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    ax.bar(x - 0.2, [r["dense_mults"] for r in rows], width=0.4, label="dense")
    ax.bar(x + 0.2, [r["circ_mults"] for r in rows], width=0.4, label="circulant+FFT")
    ax.set_yscale("log")
    ax.set_xticks(x, names, rotation=30, ha="right")
    ax.set_ylabel("multiplies per inference")
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    _finish(fig, path)
