"""Figure rendering for the CLI report paths.

Every figure lands next to the CSV it illustrates.  Uses the Agg backend so
rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .model import DynamicSequence, MetricsTrace

__all__ = [
    "save_trace_figure",
    "save_frame_montage",
    "save_per_frame_nrmse_figure",
    "save_nsre_figure",
]


def save_trace_figure(trace: MetricsTrace, path) -> None:
    """Convergence panels: objective, NRMSE, code sparsity, iterate change."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    it = trace.iters
    panels = [
        (trace.objective, "objective", "log"),
        (trace.nrmse, "NRMSE", "linear"),
        (trace.sparsity_pct, "nonzero coefficients (%)", "linear"),
        (trace.delta, "normalized iterate change", "log"),
    ]
    for ax, (values, label, yscale) in zip(axes.flat, panels):
        vals = np.asarray(values, dtype=float)
        if np.all(np.isnan(vals)) or len(vals) == 0:
            ax.text(0.5, 0.5, "n/a", ha="center", va="center", transform=ax.transAxes)
        else:
            ax.plot(it, vals, marker=".", lw=1)
            if yscale == "log" and np.nanmin(vals[vals > 0], initial=np.inf) < np.inf:
                ax.set_yscale("log")
        ax.set_xlabel("outer iteration")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    if not trace.objective_certified:
        axes.flat[0].set_title("(low-rank term omitted)", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_frame_montage(
    x: DynamicSequence, path, ref: DynamicSequence | None = None, max_frames: int = 8
) -> None:
    """Magnitude images of evenly spaced frames (with reference row if given)."""
    nt = x.nt
    idx = np.unique(np.linspace(0, nt - 1, min(max_frames, nt)).astype(int))
    rows = 2 if ref is not None else 1
    fig, axes = plt.subplots(rows, len(idx), figsize=(1.6 * len(idx), 1.8 * rows))
    axes = np.atleast_2d(axes)
    vmax = float(np.max(np.abs(x.data))) or 1.0
    for col, t in enumerate(idx):
        axes[0, col].imshow(np.abs(x.data[:, :, t]).T, cmap="gray", vmin=0, vmax=vmax)
        axes[0, col].set_title(f"frame {t}", fontsize=7)
        if ref is not None:
            axes[1, col].imshow(
                np.abs(ref.data[:, :, t]).T, cmap="gray", vmin=0, vmax=vmax
            )
    for ax in axes.flat:
        ax.set_xticks([])
        ax.set_yticks([])
    if ref is not None:
        axes[0, 0].set_ylabel("recon", fontsize=8)
        axes[1, 0].set_ylabel("reference", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_per_frame_nrmse_figure(values: np.ndarray, path, label: str = "NRMSE") -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(np.arange(len(values)), values, marker="o", lw=1)
    ax.set_xlabel("frame")
    ax.set_ylabel(label)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_nsre_figure(rows: list[dict], path) -> None:
    """Representation error vs. code sparsity, one curve per atom rank."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ranks = sorted({r["rank"] for r in rows})
    for rank in ranks:
        pts = sorted(
            ((r["sparsity_pct"], r["nsre"]) for r in rows if r["rank"] == rank)
        )
        ax.plot(
            [p[0] for p in pts],
            [p[1] for p in pts],
            marker="o",
            lw=1,
            label=f"rank {rank}",
        )
    ax.set_xlabel("nonzero coefficients (%)")
    ax.set_ylabel("NSRE")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
