"""Matplotlib rendering for the CLI report paths.

Each function takes already-computed report data and writes one PNG next to
the delimited output it visualizes. Rendering never feeds back into metrics.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluate import ScatterRow, SweepRow  # noqa: E402
from .toy import OUTCOME_TOKENS, OUTCOME_TOPICS, ToyReport  # noqa: E402

TOPIC_COLORS = ("#d62728", "#1f77b4")  # news, review


def render_toy_panels(report: ToyReport, path: str | Path) -> None:
    """Bar panel per distribution: training plus each trained objective."""
    panels = [("training", report.training_proportions)]
    panels += [(name, result.distribution) for name, result in report.modes.items()]
    fig, axes = plt.subplots(1, len(panels), figsize=(3.0 * len(panels), 2.8), sharey=True)
    if len(panels) == 1:
        axes = [axes]
    x = range(len(OUTCOME_TOKENS))
    colors = [TOPIC_COLORS[z] for z in OUTCOME_TOPICS]
    for ax, (title, dist) in zip(axes, panels):
        ax.bar(x, dist, color=colors)
        ax.set_xticks(list(x))
        ax.set_xticklabels(OUTCOME_TOKENS)
        ax.set_title(title, fontsize=10)
    axes[0].set_ylabel("probability")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sweep_curves(rows: Sequence[SweepRow], path: str | Path) -> None:
    """Test perplexity against alpha_train, one line per objective."""
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for objective in sorted({r.objective for r in rows}):
        points = sorted(
            [(r.alpha_train, r.perplexity) for r in rows if r.objective == objective],
            reverse=True,
        )
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=objective)
    ax.set_xlabel("alpha_train")
    ax.set_ylabel("test perplexity")
    ax.invert_xaxis()
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_alpha_choice(
    rows: Sequence[SweepRow], path: str | Path, reference: SweepRow | None = None
) -> None:
    """Perplexity against the solver alpha at a fixed mixture, plus a reference line."""
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    points = sorted((r.alpha, r.perplexity) for r in rows)
    ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label="topic CVaR")
    if reference is not None:
        ax.axhline(reference.perplexity, linestyle="--", color="k", label=reference.objective)
    ax.set_xlabel("alpha")
    ax.set_ylabel("test perplexity")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_scatter(rows: Sequence[ScatterRow], path: str | Path, label_a: str = "model A", label_b: str = "model B") -> None:
    """Per-sentence NLL of model B against model A, colored by source label."""
    fig, ax = plt.subplots(figsize=(4.4, 4.0))
    labels = sorted({r.source_label for r in rows})
    for i, label in enumerate(labels):
        xs = [r.nll_a for r in rows if r.source_label == label]
        ys = [r.nll_b for r in rows if r.source_label == label]
        ax.scatter(xs, ys, s=6, alpha=0.5, label=label or "(unlabeled)", color=f"C{i}")
    lims = [
        min(min((r.nll_a for r in rows), default=0.0), min((r.nll_b for r in rows), default=0.0)),
        max(max((r.nll_a for r in rows), default=1.0), max((r.nll_b for r in rows), default=1.0)),
    ]
    ax.plot(lims, lims, color="gray", linewidth=0.8)
    ax.set_xlabel(f"NLL under {label_a} (nats)")
    ax.set_ylabel(f"NLL under {label_b} (nats)")
    if labels and any(labels):
        ax.legend(markerscale=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
