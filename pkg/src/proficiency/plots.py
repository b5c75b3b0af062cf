"""Figure rendering for the CLI report paths.

Each writer takes already-computed results and saves a PNG next to the
delimited output. Uses the Agg backend so headless runs work.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_PNG_METADATA = {"Software": "proficiency"}


def save_eval_figure(report, path):
    """Grouped per-fold accuracy/F1 bars with mean lines."""
    folds = np.arange(len(report.per_fold))
    acc = [f["accuracy"] for f in report.per_fold]
    f1 = [f["f1"] for f in report.per_fold]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.38
    ax.bar(folds - width / 2, acc, width, label="accuracy", color="#4878d0")
    ax.bar(folds + width / 2, f1, width, label="F1", color="#ee854a")
    ax.axhline(report.accuracy_mean, color="#4878d0", linestyle="--", linewidth=1)
    ax.axhline(report.f1_mean, color="#ee854a", linestyle="--", linewidth=1)
    ax.set_xticks(folds)
    ax.set_xticklabels([f"fold {i}" for i in folds])
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title(report.summary(), fontsize=9)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)


def save_pca_figure(rows, path):
    """Scatter of the first two projected components, colored by label."""
    by_label = {}
    for user_id, coords, label in rows:
        by_label.setdefault(label or "(unlabeled)", []).append(coords[:2])
    fig, ax = plt.subplots(figsize=(5.5, 5))
    for label in sorted(by_label):
        pts = np.asarray(by_label[label])
        ax.scatter(pts[:, 0], pts[:, 1], s=12, alpha=0.7, label=label)
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    ax.set_title("user embeddings, top-2 principal components", fontsize=9)
    if len(by_label) <= 12:
        ax.legend(fontsize=8, markerscale=1.2)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)


def save_score_figure(scores, path):
    """Histogram of post scores; the dashed line marks the population-
    relative neutral value 1.0."""
    values = [s.ps_hat for s in scores]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.hist(values, bins=min(40, max(5, len(values) // 5 + 1)), color="#6acc64", edgecolor="white")
    ax.axvline(1.0, color="#555555", linestyle="--", linewidth=1)
    ax.set_xlabel("proficiency score")
    ax.set_ylabel("posts")
    ax.set_title(f"{len(values)} scored posts", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)
