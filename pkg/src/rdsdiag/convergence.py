"""Stabilization check for cumulative estimate series.

A trait is flagged when any of the last ``tau`` estimates differs from the
final estimate by more than ``epsilon``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .dataset import StudyDataset
from .errors import EmptySeries, UnrealizableConfig
from .estimators import EstimateSeries, cumulative_estimates
from .forest import RecruitmentForest


@dataclass(frozen=True)
class ConvergenceConfig:
    tau: int = 50
    epsilon: float = 0.02

    def __post_init__(self) -> None:
        if self.tau < 1:
            raise UnrealizableConfig("tau must be >= 1")
        if self.epsilon <= 0:
            raise UnrealizableConfig("epsilon must be > 0")


@dataclass(frozen=True)
class ConvergenceVerdict:
    flagged: bool
    first_violation_offset: Optional[int]
    max_deviation: float


def convergence_flag(
    series: EstimateSeries | Sequence[float], cfg: ConvergenceConfig = ConvergenceConfig()
) -> ConvergenceVerdict:
    """Evaluate the window rule on a series of cumulative estimates.

    The window covers offsets t = 1 .. min(tau - 1, m - 1); series shorter
    than the window are examined in full."""
    values = series.values if isinstance(series, EstimateSeries) else tuple(series)
    m = len(values)
    if m == 0:
        raise EmptySeries("cannot evaluate convergence of an empty series")
    final = values[-1]
    max_dev = 0.0
    first_offset = None
    for t in range(1, min(cfg.tau - 1, m - 1) + 1):
        dev = abs(values[m - 1 - t] - final)
        if dev > max_dev:
            max_dev = dev
        if first_offset is None and dev > cfg.epsilon:
            first_offset = t
    return ConvergenceVerdict(
        flagged=max_dev > cfg.epsilon,
        first_violation_offset=first_offset,
        max_deviation=max_dev,
    )


@dataclass(frozen=True)
class BatchVerdict:
    trait: str
    evaluable: bool
    verdict: Optional[ConvergenceVerdict]


def convergence_batch(
    ds: StudyDataset,
    forest: RecruitmentForest,
    traits: Sequence[str],
    cfg: ConvergenceConfig = ConvergenceConfig(),
    degree_question: str = "q_seen_week",
) -> list[BatchVerdict]:
    """One verdict per trait; traits with empty series are not evaluable."""
    out = []
    for trait in traits:
        series = cumulative_estimates(ds, forest, trait, degree_question)
        if len(series) == 0:
            out.append(BatchVerdict(trait=trait, evaluable=False, verdict=None))
        else:
            out.append(
                BatchVerdict(trait=trait, evaluable=True, verdict=convergence_flag(series, cfg))
            )
    return out
