"""Figure rendering for the stats and eval reports.

Figures are written next to the delimited/JSON outputs. The Agg backend and
fixed metadata keep the files byte-stable for a given input.
"""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .eval_metrics import EvalResult

log = logging.getLogger(__name__)

_SAVEFIG_KWARGS = {"dpi": 120, "metadata": {"Software": "augforge"}}


def _bar_chart(path: Path, labels: list[str], values: list[float], title: str, ylabel: str) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(range(len(labels)), values, color="#4878d0")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG_KWARGS)
    plt.close(fig)
    return path


def render_stats_figures(report: dict, out_dir: str | Path, relevances: list[float] | None = None) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if report["by_origin"]:
        written.append(_bar_chart(
            out_dir / "samples_by_origin.png",
            list(report["by_origin"]), list(report["by_origin"].values()),
            "Augmented samples by origin", "samples",
        ))
    if report["by_answer_category"]:
        written.append(_bar_chart(
            out_dir / "samples_by_category.png",
            list(report["by_answer_category"]), list(report["by_answer_category"].values()),
            "Augmented samples by answer category", "samples",
        ))
    if relevances:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.hist(relevances, bins=min(40, max(5, len(relevances) // 5)), color="#4878d0")
        ax.set_xlabel("relevance score")
        ax.set_ylabel("pairs")
        ax.set_title("Relevance-score distribution of kept pairs")
        fig.tight_layout()
        fig.savefig(out_dir / "relevance_histogram.png", **_SAVEFIG_KWARGS)
        plt.close(fig)
        written.append(out_dir / "relevance_histogram.png")
    return written


def render_eval_figures(result: EvalResult, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = [c.value for c in result.per_category] + ["all"]
    values = list(result.per_category.values()) + [result.overall]
    return [_bar_chart(out_dir / "accuracy_by_category.png", labels, values,
                       "Accuracy by answer category", "accuracy (%)")]
