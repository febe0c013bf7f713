import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import DAY, T0, series_from
from repostab.model import StabilityConfig
from repostab.simulate import scenario, simulate
from repostab.metrics import compute_series
from repostab.stability import (
    check_commit_pattern,
    check_engagement,
    check_issue_management,
    check_pr_processing,
    evaluate,
)


def test_uniform_cv_passes():
    r = check_commit_pattern(series_from([{"cv_c": 0.2}] * 5), 0.5)
    assert r.passed and r.violations == () and r.worst == 0.2


def test_single_high_cv_window_fails_and_is_listed():
    rows = [{"cv_c": 0.2}] * 5
    rows[3] = {"cv_c": 0.8}
    r = check_commit_pattern(series_from(rows), 0.5)
    assert not r.passed
    assert r.violations == (T0 + 3 * DAY,)
    assert r.worst == 0.8 and r.worst_window == T0 + 3 * DAY
    assert "dc/dt" in r.note


def test_infinite_cv_is_a_violation():
    r = check_commit_pattern(series_from([{"cv_c": float("inf")}, {}]), 0.5)
    assert r.violations == (T0,)


def test_issue_management_examples():
    assert check_issue_management(series_from([{"i": 0.35, "t_res": 10.0}] * 4), 0.3, 14).passed
    rows = [{"i": 0.35, "t_res": 10.0}] * 4
    rows[2] = {"i": 0.35, "t_res": 20.0}
    r = check_issue_management(series_from(rows), 0.3, 14)
    assert not r.passed and r.violations == (T0 + 2 * DAY,)
    assert r.worst_secondary == 20.0


def test_all_inactive_passes_with_annotation():
    r = check_issue_management(series_from([{"inactive": {"i"}}] * 3), 0.3, 14)
    assert r.passed and r.checked == 0 and r.skipped == 3
    assert "inactive" in r.note


def test_pr_processing_examples():
    assert check_pr_processing(series_from([{"p": 0.5, "t_rev": 3.0}] * 3), 0.4, 5).passed
    r = check_pr_processing(series_from([{"p": 0.5}, {"p": 0.39}, {"p": 0.5}]), 0.4, 5)
    assert not r.passed and r.violations == (T0 + DAY,)
    # fast but rare merges
    r = check_pr_processing(series_from([{"p": 0.1, "t_rev": 1.0}]), 0.4, 5)
    assert not r.passed
    assert check_pr_processing(series_from([{"p": 0.4}]), 0.4, 5).passed


def test_engagement_examples():
    assert check_engagement(series_from([{"a": 0.3, "active_ratio": 0.2}]), 0.25, 0.15).passed
    assert not check_engagement(series_from([{"a": 0.3, "active_ratio": 0.1}]), 0.25, 0.15).passed


def test_evaluate_conjunction_and_detail():
    ok = evaluate(series_from([{}] * 3), StabilityConfig())
    assert ok.overall and ok.theta == (0.5, 0.3, 14.0, 0.4, 5.0, 0.25, 0.15)
    one_bad = evaluate(series_from([{}, {"p": 0.2}, {}]), StabilityConfig())
    assert not one_bad.overall
    assert [c.passed for c in one_bad.criteria] == [True, True, False, True]


def test_tolerance_fraction_admits_sparse_violations():
    rows = [{}] * 9 + [{"cv_c": 0.9}]
    cfg = StabilityConfig(violation_tolerance=0.1)
    assert evaluate(series_from(rows, cfg), cfg).overall
    assert not evaluate(series_from(rows), StabilityConfig()).overall


row_values = st.fixed_dictionaries(
    {
        "cv_c": st.floats(0, 2),
        "i": st.floats(0, 1),
        "t_res": st.floats(0, 40),
        "p": st.floats(0, 1),
        "t_rev": st.floats(0, 20),
        "a": st.floats(0, 2),
        "active_ratio": st.floats(0, 1),
    }
)

RELAX = {
    "alpha_c": 1.5, "tau_i_days": 1.5, "tau_p_days": 1.5,
    "beta_i": 0.5, "beta_p": 0.5, "gamma_a": 0.5, "delta_a": 0.5,
}


@settings(max_examples=80, deadline=None)
@given(st.lists(row_values, min_size=1, max_size=8), st.sampled_from(sorted(RELAX)))
def test_relaxing_a_threshold_never_turns_pass_into_fail(rows, name):
    cfg = StabilityConfig()
    relaxed = dataclasses.replace(cfg, **{name: getattr(cfg, name) * RELAX[name]})
    series = series_from(rows)
    before, after = evaluate(series, cfg), evaluate(series, relaxed)
    for b, a in zip(before.criteria, after.criteria):
        assert not (b.passed and not a.passed)
        assert set(a.violations) <= set(b.violations)
    assert evaluate(series, cfg) == before
    assert before.overall == (sum(len(c.violations) for c in before.criteria) == 0)


def test_bursty_simulation_fails_commit_pattern():
    log = simulate(scenario("bursty", days=120, seed=1))
    verdict = evaluate(compute_series(log, StabilityConfig()), StabilityConfig())
    assert not verdict.commit_pattern.passed


def test_departure_simulation_fails_engagement_through_active_ratio():
    log = simulate(scenario("departure", days=160, seed=1))
    cfg = StabilityConfig()
    verdict = evaluate(compute_series(log, cfg), cfg)
    assert not verdict.engagement.passed
    assert verdict.engagement.worst_secondary < cfg.delta_a
