"""Matplotlib figure rendering for training logs and evaluation reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 110, "metadata": {"Software": "uvtex"}}


def save_loss_curve(log: list[dict], path) -> None:
    """Raw and smoothed loss vs step."""
    steps = [r["step"] for r in log]
    fig, ax = plt.subplots(figsize=(6, 3.4))
    ax.plot(steps, [r["loss"] for r in log], lw=0.7, alpha=0.5, label="loss")
    ax.plot(steps, [r["smoothed"] for r in log], lw=1.6, label="smoothed")
    ax.set_xlabel("step")
    ax.set_ylabel("mse")
    ax.set_yscale("log")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(Path(path), **_SAVE_KW)
    plt.close(fig)


def save_eval_figures(report, pairs, out_dir) -> list[Path]:
    """Figures for one EvalReport: seam histogram, per-class alignment,
    color-error scatter, and a GT vs generated texture montage.

    ``pairs`` is a list of (label name, gt ImageGrid, generated ImageGrid).
    Returns the written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    seams = [r["seam_mean"] for r in report.records if r["seam_mean"] is not None]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.hist(seams, bins=16, color="#4878cf")
    ax.axvline(report.seam_mean, color="k", lw=1, ls="--",
               label=f"mean {report.seam_mean:.3f}")
    ax.set_xlabel("per-sample seam discrepancy (mean)")
    ax.set_ylabel("samples")
    ax.legend(frameon=False)
    fig.tight_layout()
    p = out_dir / "seam_hist.png"
    fig.savefig(p, **_SAVE_KW)
    plt.close(fig)
    written.append(p)

    labels = sorted({r["label"] for r in report.records})
    rates = [np.mean([r["class_match"] for r in report.records if r["label"] == lab])
             for lab in labels]
    fig, ax = plt.subplots(figsize=(4.4, 3.2))
    ax.bar(labels, rates, color="#6acc65")
    ax.axhline(report.class_match_rate, color="k", lw=1, ls="--",
               label=f"overall {report.class_match_rate:.2f}")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("class match rate")
    ax.legend(frameon=False)
    fig.tight_layout()
    p = out_dir / "class_match.png"
    fig.savefig(p, **_SAVE_KW)
    plt.close(fig)
    written.append(p)

    tgt = [r["color_error"] for r in report.records]
    dst = [r["distractor_color_error"] for r in report.records
           if r["distractor_color_error"] is not None]
    fig, ax = plt.subplots(figsize=(4.4, 4.0))
    if len(dst) == len(tgt):
        ax.scatter(tgt, dst, s=18, alpha=0.8)
        lim = max(max(tgt, default=0.1), max(dst, default=0.1)) * 1.1
        ax.plot([0, lim], [0, lim], "k--", lw=1)
        ax.set_xlabel("color error vs labeled garment")
        ax.set_ylabel("color error vs distractor")
    fig.tight_layout()
    p = out_dir / "color_error.png"
    fig.savefig(p, **_SAVE_KW)
    plt.close(fig)
    written.append(p)

    n = min(8, len(pairs))
    if n:
        fig, axes = plt.subplots(2, n, figsize=(1.3 * n, 2.9))
        axes = np.atleast_2d(axes)
        for i in range(n):
            name, gt, gen = pairs[i]
            axes[0, i].imshow(gt.data[::-1])
            axes[1, i].imshow(gen.data[::-1])
            axes[0, i].set_title(name, fontsize=7)
            for ax in (axes[0, i], axes[1, i]):
                ax.set_xticks([])
                ax.set_yticks([])
        axes[0, 0].set_ylabel("ground truth", fontsize=8)
        axes[1, 0].set_ylabel("generated", fontsize=8)
        fig.tight_layout()
        p = out_dir / "montage.png"
        fig.savefig(p, **_SAVE_KW)
        plt.close(fig)
        written.append(p)
    return written


def save_summary_table(report, path) -> None:
    """Human-readable fixed-width summary next to the delimited records."""
    rows = [
        ("samples", f"{report.n_samples}"),
        ("seam mean", f"{report.seam_mean:.5f}"),
        ("seam max", f"{report.seam_max:.5f}"),
        ("class match rate", f"{report.class_match_rate:.3f}"),
        ("color error (target)", f"{report.ref_color_error:.4f}"),
        ("color error (distractor)", f"{report.distractor_color_error:.4f}"),
        ("patch stats distance", f"{report.patch_stats:.5f}"),
        ("cross-half attention mass", f"{report.cross_half_mass:.4f}"),
        ("attention localization", f"{report.attention_localization:.3f}"),
    ]
    width = max(len(k) for k, _ in rows)
    lines = [f"{k.ljust(width)}  {v}" for k, v in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
