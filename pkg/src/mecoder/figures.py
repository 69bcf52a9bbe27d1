"""Report figures for benchmark runs: ROC curve and score histograms.

Rendered with the Agg backend so the CLI works headless; every function
writes a PNG to the given path and returns that path.
"""
from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def _split_scores(scores, labels):
    scores = np.asarray(scores, dtype=float)
    pos = scores[[lab == "anomalous" for lab in labels]]
    neg = scores[[lab == "default" for lab in labels]]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("need scores from both the default and anomalous side")
    return pos, neg


def roc_points(pos, neg) -> tuple:
    """(fpr, tpr) arrays sweeping the threshold over every observed score."""
    pos = np.sort(np.asarray(pos, dtype=float))
    neg = np.sort(np.asarray(neg, dtype=float))
    thresholds = np.unique(np.concatenate([pos, neg]))
    # P(score >= t): sweep from the top so the curve starts at (1, 1).
    tpr = 1.0 - np.searchsorted(pos, thresholds, side="left") / len(pos)
    fpr = 1.0 - np.searchsorted(neg, thresholds, side="left") / len(neg)
    fpr = np.concatenate([[1.0], fpr, [0.0]])
    tpr = np.concatenate([[1.0], tpr, [0.0]])
    return fpr[::-1], tpr[::-1]


def save_roc_figure(path, scores, labels, title: str = "") -> str:
    """ROC curve of anomalous-vs-default scores (threshold swept over scores)."""
    pos, neg = _split_scores(scores, labels)
    fpr, tpr = roc_points(pos, neg)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot(fpr, tpr, drawstyle="steps-post", color="C0")
    ax.plot([0, 1], [0, 1], ls="--", lw=0.8, color="gray")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def save_score_histogram(path, scores, labels, title: str = "") -> str:
    """Overlaid histograms of the two score populations."""
    pos, neg = _split_scores(scores, labels)
    lo = min(pos.min(), neg.min())
    hi = max(pos.max(), neg.max())
    if hi <= lo:
        hi = lo + 1.0
    bins = np.linspace(lo, hi, 41)
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.hist(neg, bins=bins, alpha=0.6, label="default", color="C0")
    ax.hist(pos, bins=bins, alpha=0.6, label="anomalous", color="C3")
    ax.set_xlabel("score (default bits − combined bits)")
    ax.set_ylabel("trials")
    ax.legend(frameon=False)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)
