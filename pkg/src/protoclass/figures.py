"""Figure rendering for the report path.

Every pipeline stage that writes a delimited artifact can also render a
matplotlib figure next to it (PNG, Agg backend).  Figures are presentation
only; no numeric artifact depends on them.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_cpt_loss_figure(trace: list[float], path: str | Path) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(range(1, len(trace) + 1), trace, lw=1.5)
    ax.set_xlabel("epoch")
    ax.set_ylabel("contrastive loss")
    ax.set_title("Stage 1: contrastive pre-training")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_sft_loss_figure(
    traces: list[tuple[float, float, float]], path: str | Path
) -> None:
    plt = _plt()
    arr = np.asarray(traces)
    epochs = range(1, len(traces) + 1)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(epochs, arr[:, 0], lw=1.5, label="prototype")
    ax.plot(epochs, arr[:, 1], lw=1.5, label="consistency")
    ax.plot(epochs, arr[:, 2], lw=1.5, label="total", ls="--")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("Stage 3: semi-supervised fine-tuning")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_embedding_figure(
    z: np.ndarray,
    assignments: np.ndarray,
    centroids: np.ndarray,
    proto_indices: np.ndarray,
    path: str | Path,
) -> None:
    """Scatter of the projected space colored by cluster, prototypes marked."""
    plt = _plt()
    z2 = z[:, :2] if z.shape[1] >= 2 else np.column_stack([z[:, 0], np.zeros(len(z))])
    fig, ax = plt.subplots(figsize=(4.6, 4.2))
    ax.scatter(z2[:, 0], z2[:, 1], c=assignments, s=8, cmap="tab10", alpha=0.6, lw=0)
    if proto_indices.size:
        ax.scatter(
            z2[proto_indices, 0], z2[proto_indices, 1],
            marker="x", c="black", s=28, label="prototypes",
        )
    c2 = centroids[:, :2] if centroids.shape[1] >= 2 else np.column_stack(
        [centroids[:, 0], np.zeros(len(centroids))]
    )
    ax.scatter(c2[:, 0], c2[:, 1], marker="*", c="red", s=140, label="centroids")
    ax.set_title("projected embedding space")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_silhouette_figure(table: list[dict], path: str | Path) -> None:
    plt = _plt()
    labels = [f"{row['method']}\n(d={row['out_dim']}, k={row['n_neighbors']})" for row in table]
    scores = [row["silhouette"] for row in table]
    fig, ax = plt.subplots(figsize=(max(3.5, 1.3 * len(table)), 3.2))
    bars = ax.bar(range(len(table)), scores, color="steelblue")
    best = int(np.argmax(scores))
    bars[best].set_color("darkorange")
    ax.set_xticks(range(len(table)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("silhouette")
    ax.set_title("reduction sweep (winner highlighted)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_confusion_figure(confusion: np.ndarray, path: str | Path) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(4.2, 3.8))
    im = ax.imshow(confusion, cmap="Blues")
    k = confusion.shape[0]
    for i in range(k):
        for j in range(k):
            ax.text(j, i, str(confusion[i, j]), ha="center", va="center", fontsize=7)
    ax.set_xlabel("true class")
    ax.set_ylabel("predicted cluster")
    ax.set_title("confusion matrix")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
