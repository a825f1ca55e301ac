"""Time-adaptive stability assessment over streaming per-cycle scores.

A case is decided at the first cycle whose score leaves the Unknown band
[delta, 1-delta]; a case still undecided at t_max receives the bipartite
verdict of its final score (flagged as fallback) so every case terminates
with a binary answer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .cases import Dataset
from .lstm import InferenceSession, ModelParams


class Verdict(enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    UNKNOWN = "Unknown"


@dataclass
class AssessmentOutcome:
    verdict: Verdict
    decision_time: int           # cycles, >= 1
    scores: list[float]          # the trace consumed up to the decision
    fallback_used: bool

    @property
    def predicted_label(self) -> int:
        return 1 if self.verdict is Verdict.STABLE else 0


@dataclass
class MetricsRow:
    t: int
    unknown: int
    correct: int
    wrong: int
    accuracy: float | None       # over decided cases; None when nothing decided


@dataclass
class MetricsReport:
    rows: list[MetricsRow]
    art: float                   # mean decision time, cycles
    accuracy: float              # correct terminal verdicts / total
    fallback_rate: float
    n_cases: int
    delta: float
    t_max: int
    dataset_id: str


def classify_step(score: float, delta: float) -> Verdict:
    """Threshold one cycle's score; boundary equalities stay Unknown."""
    if not 0.0 < delta < 0.5:
        raise ValueError(f"stability threshold must lie in (0, 0.5), got {delta}")
    if score > 1.0 - delta:
        return Verdict.STABLE
    if score < delta:
        return Verdict.UNSTABLE
    return Verdict.UNKNOWN


def assess_case(model: ModelParams, frames: Iterable[np.ndarray], delta: float,
                t_max: int) -> AssessmentOutcome:
    """Consume streamed feature vectors until a confident verdict or t_max.

    Recurrent state is carried across cycles, so each frame costs one cell
    step. The stream must supply at least t_max frames unless a decision
    lands earlier.
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    session = InferenceSession(model)
    scores: list[float] = []
    it: Iterator[np.ndarray] = iter(frames)
    for t in range(1, t_max + 1):
        try:
            x = next(it)
        except StopIteration:
            raise ValueError(
                f"measurement stream ended at cycle {t} before a verdict "
                f"(t_max={t_max})") from None
        score = session.step(x)
        scores.append(score)
        verdict = classify_step(score, delta)
        if verdict is not Verdict.UNKNOWN:
            return AssessmentOutcome(verdict, t, scores, fallback_used=False)
    final = Verdict.STABLE if scores[-1] >= 0.5 else Verdict.UNSTABLE
    return AssessmentOutcome(final, t_max, scores, fallback_used=True)


def decide_from_scores(scores: np.ndarray, delta: float, t_max: int) -> AssessmentOutcome:
    """Same decision rule applied to a precomputed score trace."""
    if len(scores) < t_max:
        raise ValueError(f"need at least {t_max} scores, got {len(scores)}")
    trace: list[float] = []
    for t in range(1, t_max + 1):
        score = float(scores[t - 1])
        trace.append(score)
        verdict = classify_step(score, delta)
        if verdict is not Verdict.UNKNOWN:
            return AssessmentOutcome(verdict, t, trace, fallback_used=False)
    final = Verdict.STABLE if trace[-1] >= 0.5 else Verdict.UNSTABLE
    return AssessmentOutcome(final, t_max, trace, fallback_used=True)


def assess_dataset(model: ModelParams, dataset: Dataset, delta: float,
                   t_max: int) -> list[AssessmentOutcome]:
    if dataset.cycles < t_max:
        raise ValueError(f"dataset supplies {dataset.cycles} cycles, t_max={t_max}")
    return [assess_case(model, case.features, delta, t_max) for case in dataset.cases]


def report_from_outcomes(outcomes: list[AssessmentOutcome], labels: list[int],
                         delta: float, t_max: int, dataset_id: str) -> MetricsReport:
    """Accumulate the per-cycle unknown/correct/wrong table and summary stats."""
    n = len(outcomes)
    rows = [MetricsRow(t=0, unknown=n, correct=0, wrong=0, accuracy=None)]
    for t in range(1, t_max + 1):
        correct = wrong = 0
        for out, y in zip(outcomes, labels):
            if out.decision_time <= t:
                if out.predicted_label == y:
                    correct += 1
                else:
                    wrong += 1
        unknown = n - correct - wrong
        decided = correct + wrong
        rows.append(MetricsRow(t, unknown, correct, wrong,
                               correct / decided if decided else None))
        if unknown == 0:
            break
    correct_total = sum(out.predicted_label == y for out, y in zip(outcomes, labels))
    return MetricsReport(
        rows=rows,
        art=float(np.mean([out.decision_time for out in outcomes])) if n else 0.0,
        accuracy=correct_total / n if n else 0.0,
        fallback_rate=sum(out.fallback_used for out in outcomes) / n if n else 0.0,
        n_cases=n,
        delta=delta,
        t_max=t_max,
        dataset_id=dataset_id,
    )


def evaluate_dataset(model: ModelParams, dataset: Dataset, delta: float,
                     t_max: int) -> MetricsReport:
    """Assess every case and build the per-cycle accuracy table plus ART."""
    if not dataset.cases:
        raise ValueError("dataset is empty")
    outcomes = assess_dataset(model, dataset, delta, t_max)
    labels = [case.label.y for case in dataset.cases]
    return report_from_outcomes(outcomes, labels, delta, t_max, dataset.dataset_id)
