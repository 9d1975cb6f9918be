"""Evaluation measures over divergence logs and completed jobs."""

from __future__ import annotations

import math
import statistics
import warnings
from collections import Counter
from dataclasses import dataclass, field

from .domain import (
    DISTURBED_OUTCOMES,
    Architecture,
    DivergenceRecord,
    Job,
    Outcome,
    Visibility,
    classify_outcome,
)

Z_95 = 1.96


@dataclass(frozen=True)
class RunResult:
    records: tuple[DivergenceRecord, ...]
    completed_jobs: tuple[Job, ...]
    seed: int
    lag: str
    policy: str
    architecture: Architecture
    horizon: float
    warmup_cutoff: float
    rep: int = 0
    max_processing: float = 8.0

    def __post_init__(self):
        limit = self.horizon + self.max_processing
        for job in self.completed_jobs:
            if job.completion_time is None:
                raise ValueError(f"job {job.id} listed as completed without a completion time")
            if job.completion_time > limit + 1e-9:
                raise ValueError(f"job {job.id} completed after horizon + max processing")

    def scored_jobs(self) -> list[Job]:
        return [j for j in self.completed_jobs if j.completion_time > self.warmup_cutoff]

    def scored_records(self) -> list[DivergenceRecord]:
        return [r for r in self.records if r.commit_time >= self.warmup_cutoff]


def weighted_tardiness(result: RunResult) -> float:
    """Mean weighted tardiness over jobs completed after the warm-up cutoff."""
    jobs = result.scored_jobs()
    if not jobs:
        warnings.warn("no completed jobs after warm-up; weighted tardiness set to 0", RuntimeWarning)
        return 0.0
    return math.fsum(j.weight * max(0.0, j.completion_time - j.due_date) for j in jobs) / len(jobs)


def throughput(result: RunResult) -> float:
    span = result.horizon - result.warmup_cutoff
    done = sum(1 for j in result.scored_jobs() if j.completion_time <= result.horizon)
    return done / span


def count_invalid(result: RunResult) -> int:
    # human overrides of otherwise clean dispatches count as invalid
    return sum(1 for r in result.scored_records() if classify_outcome(r) is not Outcome.CLEAN)


def count_visible(result: RunResult) -> int:
    return sum(1 for r in result.scored_records() if r.visibility is Visibility.VISIBLE)


def attribution_coverage(result: RunResult) -> float:
    """Share of disturbed outcomes the learner sees with a causal type.

    Direct execution only reports a generic failure, so nothing is
    attributable. With no disturbed records the coverage is vacuously 1.
    """
    disturbed = [r for r in result.scored_records() if classify_outcome(r) is not Outcome.CLEAN]
    if not disturbed:
        return 1.0
    if result.architecture is Architecture.DIRECT:
        return 0.0
    typed = sum(1 for r in disturbed if classify_outcome(r) in DISTURBED_OUTCOMES)
    return typed / len(disturbed)


def composition_by_type(result: RunResult) -> dict[Outcome, int]:
    """Learner-visible disturbed dispatches per outcome type (layer only)."""
    if result.architecture is Architecture.DIRECT:
        return {}
    counts = Counter(classify_outcome(r) for r in result.scored_records())
    return {o: counts[o] for o in DISTURBED_OUTCOMES if counts[o]}


@dataclass(frozen=True)
class Summary:
    mean: float
    half_width_95: float
    n: int


def aggregate(values) -> Summary:
    """Mean and normal-approximation 95% half-width."""
    values = [float(v) for v in values]
    n = len(values)
    if n < 2:
        raise ValueError(f"need at least two values to aggregate, got {n}")
    mean = math.fsum(values) / n
    # sqrt(var / n) rather than sd / sqrt(n): fewer roundings
    hw = Z_95 * math.sqrt(statistics.variance(values) / n)
    return Summary(mean, hw, n)


METRICS = ("invalid", "visible", "T_w", "throughput", "coverage")


def run_metrics(result: RunResult) -> dict[str, float]:
    comp = composition_by_type(result)
    row: dict[str, float] = {
        "invalid": count_invalid(result),
        "visible": count_visible(result),
        "T_w": weighted_tardiness(result),
        "throughput": throughput(result),
        "coverage": attribution_coverage(result),
    }
    for o in DISTURBED_OUTCOMES:
        row[f"n_{o.value}"] = comp.get(o, 0)
    return row


@dataclass
class AggregateSummary:
    """Per-metric summaries for one group of runs."""

    n: int
    metrics: dict[str, Summary] = field(default_factory=dict)

    @classmethod
    def from_rows(cls, rows: list[dict[str, float]], names=METRICS) -> AggregateSummary:
        return cls(len(rows), {m: aggregate([r[m] for r in rows]) for m in names})
