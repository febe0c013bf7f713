import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import DAY, T0, naive_grid, naive_metrics, random_small_log
from repostab.metrics import (
    SeriesTooShort,
    SpanTooShort,
    WindowTooShort,
    activity_engagement,
    commit_cv,
    commit_frequency,
    compute_series,
    derivative,
    estimate_derivative,
    issue_resolution_rate,
    pr_merge_rate,
    sample_window,
    window_grid,
)
from repostab.model import Event, EventKind, StabilityConfig, Window, validate_log

FIELDS = ("c", "i", "t_res", "p", "t_rev", "a", "active_ratio", "cv_c")


def commit(ident, ts, actor="ann"):
    return Event(EventKind.COMMIT, ident, ts, actor)


def span_log(days):
    return validate_log([commit("a", T0), commit("b", T0 + days * DAY)])


@pytest.mark.parametrize(
    "span,window,stride,expected",
    [(28, 14, 7, [0, 7, 14]), (14, 14, 1, [0]), (365, 14, 1, list(range(352)))],
)
def test_window_grid_examples(span, window, stride, expected):
    grid = window_grid(span_log(span), window, stride)
    assert [(w.start - T0) // DAY for w in grid] == expected
    assert all(w.dt == window for w in grid)


def test_window_grid_too_short_and_bad_args():
    with pytest.raises(SpanTooShort):
        window_grid(span_log(13), 14, 1)
    with pytest.raises(ValueError):
        window_grid(span_log(30), 0, 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 400), st.integers(1, 30), st.integers(1, 10))
def test_window_grid_matches_naive_enumeration(span, window, stride):
    log = span_log(span)
    if span < window:
        with pytest.raises(SpanTooShort):
            window_grid(log, window, stride)
        return
    got = [w.start for w in window_grid(log, window, stride)]
    assert got == naive_grid(T0, T0 + span * DAY, window, stride)
    assert len(got) == (span - window) // stride + 1


def test_commit_frequency_examples():
    events = [commit(f"c{k}", T0 + k * DAY // 2) for k in range(14)]
    events.append(commit("late", T0 + 7 * DAY))  # exactly at the window end
    log = validate_log(events + [commit("tail", T0 + 30 * DAY)])
    assert commit_frequency(log, Window(T0, 7)) == 2.0
    assert commit_frequency(log, Window(T0 + 10 * DAY, 7)) == 0.0
    assert commit_frequency(log, Window(T0 + 7 * DAY, 7)) == 1 / 7


def _issue_log(n_closed_at_tau=4, unclosed=4):
    events = [commit("anchor", T0 - 20 * DAY), commit("end", T0 + 30 * DAY)]
    for k in range(n_closed_at_tau):
        ident = f"i{k}"
        events.append(Event(EventKind.ISSUE_OPENED, ident, T0 - 10 * DAY, "ann"))
        events.append(Event.close(EventKind.ISSUE_CLOSED, ident, T0 + 4 * DAY, "bob"))
    for k in range(unclosed):
        events.append(Event(EventKind.ISSUE_OPENED, f"u{k}", T0 - 5 * DAY, "ann"))
    return validate_log(events)


def test_issue_rate_half_closed_at_tau_gives_quarter():
    r = issue_resolution_rate(_issue_log(), Window(T0, 14), 14.0)
    assert r.value == pytest.approx(0.25, abs=1e-12)
    assert r.mean_days == pytest.approx(14.0, abs=1e-12)
    assert not r.inactive


def test_issue_rate_instant_closure_is_one():
    events = [commit("a", T0)]
    for k in range(3):
        events.append(Event(EventKind.ISSUE_OPENED, f"i{k}", T0 + DAY, "ann"))
        events.append(Event.close(EventKind.ISSUE_CLOSED, f"i{k}", T0 + DAY, "ann"))
    log = validate_log(events + [commit("b", T0 + 20 * DAY)])
    r = issue_resolution_rate(log, Window(T0, 14), 14.0)
    assert r.value == 1.0 and r.mean_days == 0.0


def test_issue_rate_inactive_without_issues():
    r = issue_resolution_rate(span_log(20), Window(T0, 14), 14.0)
    assert r.inactive and r.value is None


def test_raw_days_dampening():
    r = issue_resolution_rate(_issue_log(), Window(T0, 14), 14.0, mode="raw_days")
    assert r.value == pytest.approx(0.5 / 15, abs=1e-12)


def test_pr_rate_examples():
    events = [commit("anchor", T0 - 10 * DAY), commit("end", T0 + 30 * DAY)]
    for k in range(2):
        events.append(Event(EventKind.PR_OPENED, f"m{k}", T0 - 2 * DAY, "ann"))
        events.append(Event.close(EventKind.PR_MERGED, f"m{k}", T0 + 3 * DAY, "bob"))
    events.append(Event(EventKind.PR_OPENED, "open", T0 + DAY, "ann"))
    events.append(Event(EventKind.PR_OPENED, "rejected", T0 + DAY, "ann"))
    events.append(Event.close(EventKind.PR_CLOSED, "rejected", T0 + 2 * DAY, "bob"))
    r = pr_merge_rate(validate_log(events), Window(T0, 14), 5.0)
    assert r.value == pytest.approx(0.25, abs=1e-12)
    assert r.mean_days == pytest.approx(5.0, abs=1e-12)

    one = validate_log([
        Event(EventKind.PR_OPENED, "p", T0 + DAY, "ann"),
        Event.close(EventKind.PR_MERGED, "p", T0 + DAY, "ann"),
        commit("z", T0 + 20 * DAY),
        commit("y", T0),
    ])
    assert pr_merge_rate(one, Window(T0, 14), 5.0).value == 1.0
    assert pr_merge_rate(span_log(20), Window(T0, 14), 5.0).inactive


def _engagement_log(comments=8):
    events = []
    # seven bystanders seen before the window, plus the openers
    for k in range(7):
        events.append(commit(f"old{k}", T0 - 5 * DAY, f"idle{k}"))
    events.append(Event(EventKind.ISSUE_OPENED, "i1", T0 - 3 * DAY, "idle0"))
    events.append(Event(EventKind.ISSUE_OPENED, "i2", T0 - 3 * DAY, "idle1"))
    events.append(Event(EventKind.PR_OPENED, "p1", T0 - 3 * DAY, "idle2"))
    events.append(Event(EventKind.PR_OPENED, "p2", T0 - 3 * DAY, "idle3"))
    talkers = ["ann", "bob", "cat"]
    for k in range(comments):
        events.append(Event(EventKind.COMMENT, f"m{k}", T0 + k * 3600, talkers[k % 3], "i1"))
    for k, who in enumerate(talkers):
        events.append(commit(f"t{k}", T0 + DAY, who))
    events.append(commit("end", T0 + 20 * DAY, "ann"))
    return validate_log(events)


def test_engagement_example_is_point_six():
    r = activity_engagement(_engagement_log(), Window(T0, 7))
    assert r.active_ratio == pytest.approx(0.3, abs=1e-12)
    assert r.value == pytest.approx(0.6, abs=1e-12)


def test_engagement_zero_comments_and_no_open_items():
    r = activity_engagement(_engagement_log(comments=0), Window(T0, 7))
    assert r.value == 0.0 and not r.inactive
    assert activity_engagement(span_log(20), Window(T0, 7)).inactive


def _daily(counts):
    events = []
    for d, n in enumerate(counts):
        events += [commit(f"c{d}-{k}", T0 + d * DAY + k * 60) for k in range(n)]
    events.append(commit("outside", T0 + (len(counts) + 3) * DAY))
    events.append(commit("start", T0 - DAY))
    return validate_log(events)


@pytest.mark.parametrize(
    "counts,expected", [([2, 2, 2, 2], 0.0), ([0, 4, 0, 4], 1.0), ([0, 0, 0, 0], math.inf)]
)
def test_commit_cv_examples(counts, expected):
    assert commit_cv(_daily(counts), Window(T0, len(counts))) == expected


def test_commit_cv_window_too_short():
    with pytest.raises(WindowTooShort):
        commit_cv(_daily([1, 1]), Window(T0, 1.5))


def test_compute_series_commits_only_flags_everything_else():
    log = validate_log([commit(f"c{k}", T0 + k * DAY) for k in range(30)])
    series = compute_series(log, StabilityConfig())
    assert len(series) == 29 - 14 + 1
    assert all(s.inactive_components == {"i", "p", "a"} for s in series.samples)
    assert all(s.i is None and s.p is None and s.a is None for s in series.samples)


def test_single_window_series_matches_individual_operations():
    log = validate_log(random_small_log(3, span_days=4) + [commit("end", T0 + 14 * DAY)])
    cfg = StabilityConfig()
    series = compute_series(log, cfg)
    assert len(series) == 1
    w = series.samples[0].window
    assert series.samples[0] == sample_window(log, w, cfg)
    assert series.samples[0].c == commit_frequency(log, w)
    assert series.samples[0].cv_c == commit_cv(log, w)


@pytest.mark.parametrize("seed", range(12))
@pytest.mark.parametrize("mode", ["normalized", "raw_days"])
def test_metrics_equal_naive_scan(seed, mode):
    events = random_small_log(seed)
    log = validate_log(events)
    cfg = StabilityConfig(window_days=5, stride_days=1, dampening_mode=mode)
    for sample in compute_series(log, cfg).samples:
        expect = naive_metrics(events, sample.window.start, 5, mode=mode)
        for name in FIELDS:
            got = getattr(sample, name)
            if expect[name] is None or got is None:
                assert got is expect[name] is None, name
            elif math.isinf(expect[name]):
                assert got == expect[name]
            else:
                assert got == pytest.approx(expect[name], abs=1e-12), name


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(-(10**7), 10**7))
def test_time_shift_invariance(seed, offset):
    events = random_small_log(seed)
    cfg = StabilityConfig(window_days=4, stride_days=2)
    a = compute_series(validate_log(events), cfg)
    b = compute_series(validate_log([dataclasses.replace(e, ts=e.ts + offset) for e in events]), cfg)
    assert len(a) == len(b)
    for x, y in zip(a.samples, b.samples):
        assert y.window.start == x.window.start + offset
        for name in FIELDS:
            assert getattr(x, name) == getattr(y, name)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_partition_counts_every_commit_once(seed):
    events = random_small_log(seed)
    log = validate_log(events)
    cfg = StabilityConfig(window_days=2, stride_days=2)
    total = sum(s.c * 2 for s in compute_series(log, cfg).samples)
    t_min, t_max = log.span
    covered_end = t_min + ((t_max - t_min - 2 * DAY) // (2 * DAY) + 1) * 2 * DAY
    expected = sum(1 for e in events if e.kind is EventKind.COMMIT and e.ts < covered_end)
    assert round(total) == expected


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_outputs_finite_nonnegative_and_ratio_bounded(seed):
    log = validate_log(random_small_log(seed))
    for s in compute_series(log, StabilityConfig(window_days=3)).samples:
        assert 0.0 <= s.active_ratio <= 1.0
        for name in ("c", "i", "p", "a", "t_res", "t_rev"):
            v = getattr(s, name)
            assert v is None or (math.isfinite(v) and v >= 0)
        assert s.cv_c >= 0


def test_closing_an_open_candidate_never_lowers_closed_fraction():
    base = [commit("a", T0 - DAY), commit("z", T0 + 20 * DAY)]
    for k in range(5):
        base.append(Event(EventKind.ISSUE_OPENED, f"i{k}", T0 + k * DAY, "ann"))
    base.append(Event.close(EventKind.ISSUE_CLOSED, "i0", T0 + 2 * DAY, "ann"))
    w = Window(T0, 14)

    def fraction(events):
        r = issue_resolution_rate(validate_log(events), w, 14.0)
        return r.value * (1 + r.mean_days / 14.0)

    before = fraction(base)
    after = fraction(base + [Event.close(EventKind.ISSUE_CLOSED, "i3", T0 + 9 * DAY, "ann")])
    assert after >= before
    assert after == pytest.approx(2 / 5) and before == pytest.approx(1 / 5)


def _series(values):
    cfg = StabilityConfig(window_days=2, stride_days=1)
    events = [commit(f"c{k}", T0 + k * DAY) for k in range(len(values) + 2)]
    series = compute_series(validate_log(events), cfg)
    samples = tuple(dataclasses.replace(s, c=v) for s, v in zip(series.samples, values))
    return dataclasses.replace(series, samples=samples)


def test_derivative_examples():
    assert np.all(estimate_derivative(_series([3.0] * 5), "c") == 0)
    assert np.allclose(estimate_derivative(_series([1.0, 2.0, 3.0]), "c"), [1, 1, 1], atol=1e-15)
    with pytest.raises(SeriesTooShort):
        derivative(np.array([1.0]), np.array([0.0]))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=40), st.floats(0.25, 7))
def test_derivative_matches_finite_difference_oracle(values, h):
    t = np.arange(len(values)) * h
    got = derivative(np.array(values), t)
    n = len(values)
    for k in range(n):
        if k == 0:
            want = (values[1] - values[0]) / h
        elif k == n - 1:
            want = (values[-1] - values[-2]) / h
        else:
            want = (values[k + 1] - values[k - 1]) / (2 * h)
        assert got[k] == pytest.approx(want, abs=1e-9, rel=1e-12)
