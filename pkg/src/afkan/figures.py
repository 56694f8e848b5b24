"""Figure rendering for the CLI report paths.

Every function writes one PNG next to the delimited file the command
already produced. Rendering is headless (Agg); nothing here feeds back
into training or evaluation.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_basis_figure(xs, curves, path, title="basis functions"):
    """One line per basis function over the sampled range."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for j in range(curves.shape[1]):
        ax.plot(xs, curves[:, j], lw=1.5, label=f"b{j}")
    ax.set_xlabel("x")
    ax.set_ylabel("value")
    ax.set_title(title)
    if curves.shape[1] <= 10:
        ax.legend(fontsize=8, ncol=2)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_training_figure(histories, path, title="training"):
    """Loss and test accuracy per epoch, one translucent line per run."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for hist in histories:
        epochs = [r.epoch for r in hist.records]
        ax1.plot(epochs, [r.train_loss for r in hist.records],
                 alpha=0.8, label=f"seed {hist.run_seed}")
        ax2.plot(epochs, [100 * r.test_acc for r in hist.records], alpha=0.8)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss")
    ax1.grid(alpha=0.3)
    if len(histories) <= 6:
        ax1.legend(fontsize=8)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("test accuracy (%)")
    ax2.grid(alpha=0.3)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_compare_figure(rows, path, title="variant comparison"):
    """Bar chart of mean final accuracy with sample-deviation whiskers.

    rows: (label, mean_acc, std_acc) triples, accuracies in [0, 1]."""
    labels = [r[0] for r in rows]
    means = [100 * r[1] for r in rows]
    stds = [100 * r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(rows), 4))
    xs = np.arange(len(rows))
    ax.bar(xs, means, yerr=stds, capsize=4, color="#4878cf")
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("test accuracy (%)")
    lo = max(0.0, min(means) - 3)
    ax.set_ylim(lo, min(100.0, max(means) + 1))
    ax.set_title(title)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_figure(grids, orders, acc, path, title="grid/order sweep"):
    """Heatmap of accuracy over the grid x order plane. ``acc`` is
    indexed [grid_index, order_index], values in [0, 1]."""
    fig, ax = plt.subplots(figsize=(1.5 + 0.9 * len(orders),
                                    1.2 + 0.7 * len(grids)))
    im = ax.imshow(100 * np.asarray(acc), cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(orders)), [str(o) for o in orders])
    ax.set_yticks(range(len(grids)), [str(g) for g in grids])
    ax.set_xlabel("order")
    ax.set_ylabel("grid")
    for i in range(len(grids)):
        for j in range(len(orders)):
            ax.text(j, i, f"{100 * acc[i][j]:.2f}", ha="center",
                    va="center", color="white", fontsize=8)
    fig.colorbar(im, ax=ax, label="test accuracy (%)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
