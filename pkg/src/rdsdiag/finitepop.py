"""With-replacement sampling indicators and their summary grid."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import StudyDataset
from .errors import InsufficientData, MissingTarget, NoData
from .forest import RecruitmentForest


@dataclass(frozen=True)
class FailedAttemptsResult:
    percent_reporting: float
    flagged: bool
    threshold: float
    n_answered: int
    band_0: int
    band_1_3: int
    band_4_plus: int


@dataclass(frozen=True)
class ParticipantsKnownTrend:
    slope: float
    flagged: bool
    proportions: tuple[float, ...]
    orders: tuple[int, ...]
    n_excluded_zero_degree: int


@dataclass(frozen=True)
class IndicatorSummary:
    attainment_failed: Optional[bool]  # None = not evaluable
    failed_attempts_flag: Optional[bool]
    participants_known_trend_flag: Optional[bool]


def attainment_indicator(ds: StudyDataset) -> bool:
    """True when the achieved sample is below the recruitment target."""
    if ds.target_sample_size is None:
        raise MissingTarget("dataset has no target sample size")
    return ds.n < ds.target_sample_size


def failed_attempts_indicator(
    ds: StudyDataset, threshold: float = 0.25
) -> FailedAttemptsResult:
    """Share of follow-up answerers reporting at least one failed coupon
    attempt, with the 0 / 1-3 / 4+ banding."""
    counts = [
        r.followup.n_failed_attempts
        for r in ds.respondents
        if r.followup is not None and r.followup.n_failed_attempts is not None
    ]
    if not counts:
        raise NoData("nobody answered the failed-attempts question")
    at_least_one = sum(1 for c in counts if c >= 1)
    pct = at_least_one / len(counts)
    return FailedAttemptsResult(
        percent_reporting=100.0 * pct,
        flagged=pct >= threshold,
        threshold=threshold,
        n_answered=len(counts),
        band_0=sum(1 for c in counts if c == 0),
        band_1_3=sum(1 for c in counts if 1 <= c <= 3),
        band_4_plus=sum(1 for c in counts if c >= 4),
    )


def participants_known_trend(ds: StudyDataset) -> ParticipantsKnownTrend:
    """Least-squares slope of the proportion of contacts already in the
    study against interview order; positive slopes flag.

    Expects the known-participants cap to have been applied by validation;
    respondents with zero reported contacts are excluded and counted."""
    orders, props = [], []
    excluded = 0
    for r in ds.respondents:
        fu = r.followup
        if fu is None or fu.n_known_participants is None:
            continue
        q_age = r.degree.q_age
        if q_age is None:
            continue
        if q_age == 0:
            excluded += 1
            continue
        orders.append(r.interview_order)
        props.append(fu.n_known_participants / q_age)
    if len(set(orders)) < 2:
        raise InsufficientData("need >= 2 distinct orders with proportions")
    slope = float(np.polyfit(np.array(orders, dtype=float), np.array(props), 1)[0])
    return ParticipantsKnownTrend(
        slope=slope,
        flagged=slope > 1e-12,  # tolerance absorbs least-squares rounding noise
        proportions=tuple(props),
        orders=tuple(orders),
        n_excluded_zero_degree=excluded,
    )


def indicator_summary(ds: StudyDataset, forest: RecruitmentForest) -> IndicatorSummary:
    """The three with-replacement indicators; cells that cannot be computed
    come back as None (rendered distinctly from an unflagged cell)."""
    try:
        attainment: Optional[bool] = attainment_indicator(ds)
    except MissingTarget:
        attainment = None
    try:
        failed: Optional[bool] = failed_attempts_indicator(ds).flagged
    except NoData:
        failed = None
    try:
        trend: Optional[bool] = participants_known_trend(ds).flagged
    except InsufficientData:
        trend = None
    return IndicatorSummary(
        attainment_failed=attainment,
        failed_attempts_flag=failed,
        participants_known_trend_flag=trend,
    )
