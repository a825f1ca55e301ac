"""Figure renders written next to each delimited report."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .assess import MetricsReport  # noqa: E402
from .report import SelectionResult, SweepResult  # noqa: E402

DPI = 150


def save_metrics_figure(report: MetricsReport, path) -> None:
    """Undecided-case count and cumulative accuracy per post-clearance cycle."""
    ts = [row.t for row in report.rows]
    unknown = [row.unknown for row in report.rows]
    acc = [(row.t, row.accuracy) for row in report.rows if row.accuracy is not None]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.step(ts, unknown, where="post")
    ax1.set_xlabel("cycles after clearance")
    ax1.set_ylabel("unknown cases")
    ax1.grid(alpha=0.3)
    if acc:
        ax2.plot([t for t, _ in acc], [a * 100 for _, a in acc], marker="o", ms=3)
    ax2.set_xlabel("cycles after clearance")
    ax2.set_ylabel("accuracy of decided [%]")
    ax2.grid(alpha=0.3)
    fig.suptitle(f"{report.dataset_id}: ART={report.art:.3f} cycles, "
                 f"accuracy={report.accuracy * 100:.2f}%", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_sweep_figure(result: SweepResult, path) -> None:
    """ART and accuracy against the swept parameter, twin axes."""
    xs = [row.value for row in result.rows]
    fig, ax1 = plt.subplots(figsize=(6, 3.6))
    ax1.plot(xs, [row.art for row in result.rows], color="tab:blue", marker="o", ms=3)
    ax1.set_xlabel(result.name)
    ax1.set_ylabel("ART [cycles]", color="tab:blue")
    ax1.tick_params(axis="y", labelcolor="tab:blue")
    ax1.grid(alpha=0.3)
    ax2 = ax1.twinx()
    ax2.plot(xs, [row.accuracy * 100 for row in result.rows],
             color="tab:red", marker="s", ms=3)
    ax2.set_ylabel("accuracy [%]", color="tab:red")
    ax2.tick_params(axis="y", labelcolor="tab:red")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_selection_figure(result: SelectionResult, path) -> None:
    """Assessment quality as measurement coverage grows (or shrinks)."""
    xs = [row.count for row in result.rows]
    fig, ax1 = plt.subplots(figsize=(6, 3.6))
    ax1.plot(xs, [row.art for row in result.rows], color="tab:blue", marker="o", ms=3)
    ax1.set_xlabel("installed PMU count")
    ax1.set_ylabel("ART [cycles]", color="tab:blue")
    ax1.tick_params(axis="y", labelcolor="tab:blue")
    ax1.grid(alpha=0.3)
    ax2 = ax1.twinx()
    ax2.plot(xs, [row.accuracy * 100 for row in result.rows],
             color="tab:red", marker="s", ms=3)
    ax2.set_ylabel("accuracy [%]", color="tab:red")
    ax2.tick_params(axis="y", labelcolor="tab:red")
    ax1.set_title(f"sequential {result.direction} selection", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_history_figure(history, path) -> None:
    epochs = [e for e, _, _ in history.epochs]
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(epochs, [tr for _, tr, _ in history.epochs], label="train")
    ax.plot(epochs, [va for _, _, va in history.epochs], label="validation")
    ax.axvline(history.best_epoch, color="gray", ls="--", lw=1, label="best epoch")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean BCE loss")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
