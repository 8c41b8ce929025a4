"""Delimited report writers and the matplotlib figures rendered next to them."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

STEP_COLUMNS = ("step", "syn1", "syn2", "syn3", "refine", "perceptual", "gan_g", "gan_d", "total")
HISTORY_COLUMNS = ("epoch", "steps", "train_loss", "val_psnr")


def _fmt(value):
    if isinstance(value, float):
        return "%.10g" % value
    return str(value)


def write_tsv(path, columns, rows):
    lines = ["\t".join(columns)]
    for row in rows:
        lines.append("\t".join(_fmt(row.get(c, 0)) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")
    return path


def write_history(path, history_rows):
    return write_tsv(path, HISTORY_COLUMNS, history_rows)


def write_step_log(path, step_rows):
    return write_tsv(path, STEP_COLUMNS, step_rows)


def plot_history(path, history_rows, step_rows=None):
    """Training curves: per-epoch loss and validation PSNR, plus the step-level
    loss breakdown when available."""
    n_axes = 2 if step_rows else 1
    fig, axes = plt.subplots(1, n_axes, figsize=(6 * n_axes, 4))
    axes = np.atleast_1d(axes)
    epochs = [r["epoch"] for r in history_rows]
    ax = axes[0]
    ax.plot(epochs, [r["train_loss"] for r in history_rows], "o-", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("train loss")
    twin = ax.twinx()
    twin.plot(epochs, [r["val_psnr"] for r in history_rows], "s--", color="tab:green", label="val PSNR")
    twin.set_ylabel("validation PSNR (dB)")
    ax.set_title("training history")
    if step_rows:
        ax = axes[1]
        steps = [r["step"] for r in step_rows]
        for key in ("syn1", "syn2", "syn3", "refine", "total"):
            series = [r.get(key, 0.0) for r in step_rows]
            if any(v != 0.0 for v in series):
                ax.plot(steps, series, label=key, linewidth=0.8)
        ax.set_xlabel("step")
        ax.set_ylabel("loss component")
        ax.set_yscale("log")
        ax.legend(fontsize=8)
        ax.set_title("loss breakdown")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_eval_report(path, rows, mean_model, mean_baseline):
    columns = ("index", "source", "psnr", "baseline_psnr")
    out = [dict(row) for row in rows]
    out.append({"index": "mean", "source": "", "psnr": mean_model, "baseline_psnr": mean_baseline})
    return write_tsv(path, columns, out)


def plot_eval_report(path, rows):
    fig, ax = plt.subplots(figsize=(7, 4))
    idx = np.arange(len(rows))
    model = [r["psnr"] for r in rows]
    base = [r["baseline_psnr"] for r in rows]
    ax.plot(idx, model, "o-", label="model", markersize=3)
    ax.plot(idx, base, "s--", label="frame average", markersize=3)
    ax.set_xlabel("triplet")
    ax.set_ylabel("PSNR (dB)")
    ax.legend()
    ax.set_title("per-triplet reconstruction accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_complexity_tsv(path, report):
    rows = [
        {"module": module, "params": params, "flops": flops}
        for module, params, flops in report.rows()
    ]
    rows.append({"module": "total", "params": report.total_params, "flops": report.total_flops})
    return write_tsv(path, ("module", "params", "flops"), rows)


def plot_complexity(path, report):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    rows = report.rows()
    labels = [m for m, _, _ in rows]
    axes[0].bar(labels, [p for _, p, _ in rows], color="tab:blue")
    axes[0].set_ylabel("parameters")
    axes[1].bar(labels, [f / 1e9 for _, _, f in rows], color="tab:orange")
    axes[1].set_ylabel("GFLOPs per frame")
    for ax in axes:
        ax.tick_params(axis="x", rotation=30)
    fig.suptitle("%s @ %dx%d" % (report.arch, report.height, report.width))
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def features_to_image(gamma):
    """Visualize (3, H, W) synthesis features as an RGB image: flow channels and
    the occlusion weight each mapped from [-1, 1] to [0, 1]."""
    gamma = np.asarray(gamma, dtype=np.float64)
    return np.clip((gamma + 1.0) * 0.5, 0.0, 1.0)
