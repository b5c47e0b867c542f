import pytest

from conftest import followup, make_dataset, make_degree, make_respondent
from rdsdiag.errors import InsufficientData, MissingTarget, NoData
from rdsdiag.finitepop import (
    attainment_indicator,
    failed_attempts_indicator,
    indicator_summary,
    participants_known_trend,
)
from rdsdiag.forest import build_forest


def _row(rid, order, failed=None, known=None, q_age=5):
    fu = None
    if failed is not None or known is not None:
        fu = followup(n_failed_attempts=failed, n_known_participants=known)
    return make_respondent(rid, order, degree=make_degree(q_age), traits={"hiv": "no"},
                           followup=fu)


def test_attainment():
    ds = make_dataset([_row("a", 1)], target=2)
    assert attainment_indicator(ds) is True
    ds = make_dataset([_row("a", 1), _row("b", 2)], target=2)
    assert attainment_indicator(ds) is False


def test_attainment_missing_target():
    ds = make_dataset([_row("a", 1)])
    with pytest.raises(MissingTarget):
        attainment_indicator(ds)


def test_failed_attempts_none_reported():
    ds = make_dataset([_row(f"x{i}", i + 1, failed=0) for i in range(5)])
    result = failed_attempts_indicator(ds)
    assert result.percent_reporting == 0.0
    assert not result.flagged
    assert result.band_0 == 5


def test_failed_attempts_bands_and_flag():
    failed = [0, 0, 0, 0, 0, 0, 0, 1, 3, 6]
    rows = [_row(f"x{i}", i + 1, failed=f) for i, f in enumerate(failed)]
    rows.append(_row("noanswer", 11))  # no follow-up: not in denominator
    result = failed_attempts_indicator(make_dataset(rows))
    assert result.n_answered == 10
    assert result.percent_reporting == pytest.approx(30.0)
    assert result.flagged  # 0.30 >= 0.25
    assert (result.band_0, result.band_1_3, result.band_4_plus) == (7, 2, 1)


def test_failed_attempts_threshold_one_unflagged():
    rows = [_row(f"x{i}", i + 1, failed=2) for i in range(4)]
    result = failed_attempts_indicator(make_dataset(rows), threshold=1.0)
    assert result.percent_reporting == 100.0
    assert result.flagged  # exactly at threshold counts
    result = failed_attempts_indicator(make_dataset(rows[:3] + [_row("z", 4, failed=0)]),
                                       threshold=1.0)
    assert not result.flagged


def test_failed_attempts_no_answers():
    ds = make_dataset([_row("a", 1)])
    with pytest.raises(NoData):
        failed_attempts_indicator(ds)


def test_trend_constant_proportion():
    rows = [_row(f"x{i}", i + 1, known=2, q_age=10) for i in range(5)]
    trend = participants_known_trend(make_dataset(rows))
    assert trend.slope == pytest.approx(0.0, abs=1e-12)
    assert not trend.flagged


def test_trend_exact_linear_slope():
    # proportions 0.1, 0.2, 0.3, 0.4 at orders 1..4
    knowns = [1, 2, 3, 4]
    rows = [_row(f"x{i}", i + 1, known=k, q_age=10) for i, k in enumerate(knowns)]
    trend = participants_known_trend(make_dataset(rows))
    assert trend.slope == pytest.approx(0.1, abs=1e-12)
    assert trend.flagged
    assert trend.proportions == pytest.approx((0.1, 0.2, 0.3, 0.4))


def test_trend_zero_degree_excluded():
    rows = [
        _row("a", 1, known=1, q_age=4),
        _row("b", 2, known=0, q_age=0),
        _row("c", 3, known=1, q_age=2),
    ]
    trend = participants_known_trend(make_dataset(rows))
    assert trend.n_excluded_zero_degree == 1
    assert len(trend.orders) == 2


def test_trend_insufficient_data():
    rows = [_row("a", 1, known=0, q_age=0), _row("b", 2, known=1, q_age=0)]
    with pytest.raises(InsufficientData):
        participants_known_trend(make_dataset(rows))


def test_indicator_summary_mixed():
    rows = [
        _row(f"x{i}", i + 1, failed=1 if i < 3 else 0, known=None, q_age=5)
        for i in range(10)
    ]
    ds = make_dataset(rows)  # no target, no known-participant answers
    summary = indicator_summary(ds, build_forest(ds))
    assert summary.attainment_failed is None
    assert summary.failed_attempts_flag is True  # 30% >= 25%
    assert summary.participants_known_trend_flag is None


def test_indicator_summary_all_evaluable():
    rows = [
        _row(f"x{i}", i + 1, failed=0, known=1, q_age=10)
        for i in range(4)
    ]
    ds = make_dataset(rows, target=3)
    summary = indicator_summary(ds, build_forest(ds))
    assert summary.attainment_failed is False
    assert summary.failed_attempts_flag is False
    assert summary.participants_known_trend_flag is False
