"""Report figures rendered next to the delimited outputs.

Everything draws through the Agg backend so the CLI works headless; each
function writes one PNG and returns the path it wrote.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_CATEGORY_COLORS = {
    "overall": "#333333",
    "ambiguous": "#d62728",
    "unseen": "#1f77b4",
    "seen-unambiguous": "#2ca02c",
}


def learning_curve_figure(series, path):
    """Accuracy vs. training fraction, one line per token category."""
    fig, ax = plt.subplots(figsize=(6, 4))
    fractions = [f for f, _ in series]
    ax.plot(fractions, [r.overall for _, r in series], marker="o",
            color=_CATEGORY_COLORS["overall"], label="overall")
    names = [n for n in series[0][1].categories]
    for name in names:
        points = [(f, r.categories[name][0]) for f, r in series
                  if r.categories[name][0] is not None]
        if points:
            ax.plot([p[0] for p in points], [p[1] for p in points], marker="s",
                    color=_CATEGORY_COLORS.get(name), label=name)
    ax.set_xlabel("fraction of training sentences")
    ax.set_ylabel("lemma accuracy")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def error_patterns_figure(patterns, path, top_n: int = 15):
    """Horizontal bars for the most frequent edit-operation multisets."""
    top = patterns[:top_n]
    fig, ax = plt.subplots(figsize=(6, max(2.0, 0.4 * len(top) + 1)))
    labels = [" + ".join(key) for key, _ in top][::-1]
    counts = [count for _, count in top][::-1]
    ax.barh(range(len(top)), counts, color="#1f77b4")
    ax.set_yticks(range(len(top)))
    ax.set_yticklabels(labels, fontsize=8)
    ax.set_xlabel("errors")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def correlation_figure(rows, report, path):
    """Scatter of the per-language accuracy delta against tag and token
    counts, annotated with the Pearson/Spearman coefficients."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    deltas = [r.delta for r in rows]
    for ax, xs, label, pearson, spearman in (
            (axes[0], [r.tags for r in rows], "distinct tags",
             report.tags_pearson, report.tags_spearman),
            (axes[1], [r.tokens for r in rows], "training tokens",
             report.tokens_pearson, report.tokens_spearman)):
        ax.scatter(xs, deltas, s=18, color="#1f77b4")
        ax.axhline(0.0, color="#999999", lw=0.8)
        ax.set_xlabel(label)
        ax.set_ylabel("accuracy delta")
        ax.set_title(f"Pearson {pearson:+.3f} / Spearman {spearman:+.3f}",
                     fontsize=9)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def category_accuracy_figure(report, path):
    """Bar chart of the evaluation breakdown by token category."""
    names = ["overall"] + [n for n, (acc, _) in report.categories.items()
                           if acc is not None]
    values = [report.overall] + [report.categories[n][0] for n in names[1:]]
    counts = [report.total] + [report.categories[n][1] for n in names[1:]]
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(range(len(names)), values,
                  color=[_CATEGORY_COLORS.get(n, "#777777") for n in names])
    for bar, value, count in zip(bars, values, counts):
        ax.text(bar.get_x() + bar.get_width() / 2, value + 0.01,
                f"{value:.3f}\n(n={count})", ha="center", fontsize=8)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, fontsize=8)
    ax.set_ylim(0, 1.1)
    ax.set_ylabel("lemma accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
