"""Delimited-text emission for assessment tables, sweeps, and selections.

Every CSV starts with a comment row embedding the format version and the
hash of the effective experiment configuration, so outputs are traceable to
the exact run that produced them.
"""

from __future__ import annotations

from dataclasses import dataclass

from .assess import MetricsReport

REPORT_FORMAT_VERSION = 1


def _header_comment(config_hash: str) -> str:
    return f"# tsakit-report v{REPORT_FORMAT_VERSION} config={config_hash}\n"


def write_metrics_csv(report: MetricsReport, path, config_hash: str,
                      window: int) -> None:
    """Per-cycle table (t, unknown, correct, wrong, accuracy) plus a summary line."""
    with open(path, "w") as fh:
        fh.write(_header_comment(config_hash))
        fh.write("t,unknown,correct,wrong,accuracy\n")
        for row in report.rows:
            acc = "NA" if row.accuracy is None else f"{row.accuracy:.6f}"
            fh.write(f"{row.t},{row.unknown},{row.correct},{row.wrong},{acc}\n")
        fh.write(f"# summary art={report.art:.6f} accuracy={report.accuracy:.6f} "
                 f"delta={report.delta:g} T={window} tmax={report.t_max} "
                 f"dataset={report.dataset_id} fallback_rate={report.fallback_rate:.6f} "
                 f"n={report.n_cases}\n")


@dataclass
class SweepRow:
    value: float
    art: float
    accuracy: float
    fallback_rate: float
    train_seconds: float


@dataclass
class SweepResult:
    name: str                  # swept parameter name, e.g. "delta" or "T"
    rows: list[SweepRow]


def write_sweep_csv(result: SweepResult, path, config_hash: str) -> None:
    with open(path, "w") as fh:
        fh.write(_header_comment(config_hash))
        fh.write(f"{result.name},art,accuracy,fallback_rate,train_seconds\n")
        for row in result.rows:
            fh.write(f"{row.value:g},{row.art:.6f},{row.accuracy:.6f},"
                     f"{row.fallback_rate:.6f},{row.train_seconds:.3f}\n")


@dataclass
class SelectionRow:
    count: int
    bus_ids: tuple[int, ...]
    accuracy: float
    art: float


@dataclass
class SelectionResult:
    direction: str             # "forward" or "backward"
    rows: list[SelectionRow]


def write_selection_csv(result: SelectionResult, path, config_hash: str) -> None:
    """Rows of (PMU count, bus id list, accuracy, ART); ids space-separated."""
    with open(path, "w") as fh:
        fh.write(_header_comment(config_hash))
        fh.write("pmu_count,bus_ids,accuracy,art\n")
        for row in result.rows:
            ids = " ".join(str(b) for b in row.bus_ids)
            fh.write(f"{row.count},{ids},{row.accuracy:.6f},{row.art:.6f}\n")


def write_train_time_csv(times: list[float], path, config_hash: str) -> None:
    import statistics
    mean = statistics.mean(times)
    std = statistics.stdev(times) if len(times) > 1 else 0.0
    with open(path, "w") as fh:
        fh.write(_header_comment(config_hash))
        fh.write("repeats,mean_seconds,std_seconds\n")
        fh.write(f"{len(times)},{mean:.3f},{std:.3f}\n")


def write_history_csv(history, path, config_hash: str) -> None:
    with open(path, "w") as fh:
        fh.write(_header_comment(config_hash))
        fh.write("epoch,train_loss,valid_loss\n")
        for epoch, train_loss, valid_loss in history.epochs:
            fh.write(f"{epoch},{train_loss:.8f},{valid_loss:.8f}\n")
        fh.write(f"# best_epoch={history.best_epoch} stopped_epoch={history.stopped_epoch}\n")
