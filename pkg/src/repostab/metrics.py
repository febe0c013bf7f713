"""Windowed state functions: commit frequency, issue resolution rate, PR merge
rate, activity engagement, plus the daily-commit coefficient of variation.

Windows are half-open ``[start, start + dt)``. An item is "open at the window
start" when it was opened strictly before ``start`` and had not been
closed/merged strictly before ``start``; events stamped exactly at ``start``
belong to the window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import (
    SECONDS_PER_DAY,
    LogColumns,
    MetricSample,
    MetricSeries,
    RepositoryLog,
    StabilityConfig,
    Window,
)


class SpanTooShort(ValueError):
    pass


class WindowTooShort(ValueError):
    pass


class SeriesTooShort(ValueError):
    pass


@dataclass(frozen=True)
class RateResult:
    """Output of the issue/PR rate functions. ``value`` is None when inactive."""

    value: float | None
    mean_days: float
    inactive: bool


@dataclass(frozen=True)
class EngagementResult:
    value: float | None
    active_ratio: float
    inactive: bool


class _Lifecycle:
    """Sorted views over one item stream (issues or PRs) for interval counting."""

    def __init__(self, opened: np.ndarray, ended: np.ndarray, finished: np.ndarray):
        # ended: first of close/merge (or +inf); finished: the event being rated
        self.open_sorted = np.sort(opened)
        self.end_sorted = np.sort(ended)
        order = np.argsort(finished, kind="stable")
        self.finish_sorted = finished[order]
        done = np.isfinite(finished)
        durations = np.zeros(len(finished), dtype=np.int64)
        durations[done] = (finished[done] - opened[done]).astype(np.int64)
        self.duration_cumsum = np.concatenate(([0], np.cumsum(durations[order])))

    def candidates(self, start: float, end: float) -> int:
        # opened before the window end and not ended before the window start
        n_opened = np.searchsorted(self.open_sorted, end, side="left")
        n_ended = np.searchsorted(self.end_sorted, start, side="left")
        return int(n_opened - n_ended)

    def open_at(self, t: float) -> int:
        n_opened = np.searchsorted(self.open_sorted, t, side="left")
        n_ended = np.searchsorted(self.end_sorted, t, side="left")
        return int(n_opened - n_ended)

    def finished_in(self, start: float, end: float) -> tuple[int, int]:
        """Count and total duration (seconds) of items finishing in ``[start, end)``."""
        lo = np.searchsorted(self.finish_sorted, start, side="left")
        hi = np.searchsorted(self.finish_sorted, end, side="left")
        return int(hi - lo), int(self.duration_cumsum[hi] - self.duration_cumsum[lo])


class _Index:
    def __init__(self, cols: LogColumns):
        self.cols = cols

    @cached_property
    def issues(self) -> _Lifecycle:
        c = self.cols
        return _Lifecycle(c.issue_open, c.issue_close, c.issue_close)

    @cached_property
    def prs(self) -> _Lifecycle:
        c = self.cols
        return _Lifecycle(c.pr_open, c.pr_end, c.pr_merge)


def _index(log: RepositoryLog) -> _Index:
    # stored next to the log's cached columns; the log is immutable
    idx = log.__dict__.get("_metrics_index")
    if idx is None:
        idx = _Index(log.columns)
        object.__setattr__(log, "_metrics_index", idx)
    return idx


def _count(sorted_ts: np.ndarray, start: float, end: float) -> int:
    return int(np.searchsorted(sorted_ts, end, "left") - np.searchsorted(sorted_ts, start, "left"))


def _dampening(mean_days: float, tau_days: float, mode: str) -> float:
    if mode == "raw_days":
        return 1.0 / (1.0 + mean_days)
    return 1.0 / (1.0 + mean_days / tau_days)


def window_grid(log: RepositoryLog, window_days: float, stride_days: float) -> list[Window]:
    if window_days <= 0 or stride_days <= 0:
        raise ValueError("window_days and stride_days must be positive")
    width = round(window_days * SECONDS_PER_DAY)
    stride = round(stride_days * SECONDS_PER_DAY)
    t_min, t_max = log.span
    if t_max - t_min < width:
        raise SpanTooShort(
            f"log spans {log.span_days:.3f} days, shorter than the {window_days}-day window"
        )
    count = (t_max - t_min - width) // stride + 1
    return [Window(t_min + k * stride, window_days) for k in range(count)]


def commit_frequency(log: RepositoryLog, w: Window) -> float:
    return _count(log.columns.commit_ts, w.start, w.end) / w.dt


def issue_resolution_rate(
    log: RepositoryLog, w: Window, tau_i: float, mode: str = "normalized"
) -> RateResult:
    return _rate(_index(log).issues, w, tau_i, mode)


def pr_merge_rate(
    log: RepositoryLog, w: Window, tau_p: float, mode: str = "normalized"
) -> RateResult:
    return _rate(_index(log).prs, w, tau_p, mode)


def _rate(stream: _Lifecycle, w: Window, tau: float, mode: str) -> RateResult:
    candidates = stream.candidates(w.start, w.end)
    done, seconds = stream.finished_in(w.start, w.end)
    mean_days = seconds / done / SECONDS_PER_DAY if done else 0.0
    if candidates == 0:
        return RateResult(None, mean_days, True)
    return RateResult((done / candidates) * _dampening(mean_days, tau, mode), mean_days, False)


def activity_engagement(log: RepositoryLog, w: Window) -> EngagementResult:
    cols = log.columns
    idx = _index(log)
    comments = _count(cols.comment_ts, w.start, w.end)
    open_items = idx.issues.open_at(w.start) + idx.prs.open_at(w.start)

    lo = np.searchsorted(cols.engage_ts, w.start, "left")
    hi = np.searchsorted(cols.engage_ts, w.end, "left")
    active = len(np.unique(cols.engage_actor[lo:hi]))
    total = int(np.searchsorted(cols.actor_first_seen, w.end, "left"))

    ratio = active / total if total else 0.0
    if open_items == 0 or total == 0:
        return EngagementResult(None, ratio, True)
    return EngagementResult((comments / open_items) * ratio, ratio, False)


def daily_commit_counts(log: RepositoryLog, w: Window) -> np.ndarray:
    """Commit counts per whole day, buckets aligned to the window start."""
    days = math.floor(w.dt)
    if days < 2:
        raise WindowTooShort("commit CV needs a window of at least 2 whole days")
    edges = w.start + SECONDS_PER_DAY * np.arange(days + 1)
    return np.diff(np.searchsorted(log.columns.commit_ts, edges, "left"))


def commit_cv(log: RepositoryLog, w: Window) -> float:
    """Population coefficient of variation of daily commits; +inf when there are none."""
    counts = daily_commit_counts(log, w)
    mean = counts.mean()
    if mean == 0:
        return math.inf
    return float(counts.std() / mean)


def sample_window(log: RepositoryLog, w: Window, config: StabilityConfig) -> MetricSample:
    mode = config.dampening_mode
    issues = issue_resolution_rate(log, w, config.tau_i_days, mode)
    prs = pr_merge_rate(log, w, config.tau_p_days, mode)
    eng = activity_engagement(log, w)
    inactive = frozenset(
        name for name, flag in (("i", issues.inactive), ("p", prs.inactive), ("a", eng.inactive)) if flag
    )
    return MetricSample(
        window=w,
        c=commit_frequency(log, w),
        i=issues.value,
        p=prs.value,
        a=eng.value,
        cv_c=commit_cv(log, w),
        t_res=issues.mean_days,
        t_rev=prs.mean_days,
        active_ratio=eng.active_ratio,
        inactive_components=inactive,
    )


def compute_series(log: RepositoryLog, config: StabilityConfig) -> MetricSeries:
    windows = window_grid(log, config.window_days, config.stride_days)
    return MetricSeries(tuple(sample_window(log, w, config) for w in windows), config)


def estimate_derivative(series: MetricSeries, field: str) -> np.ndarray:
    """Per-day rate of change of a sample field.

    Central differences inside, one-sided differences at both ends; the
    spacing is taken from the actual window starts.
    """
    if len(series) < 2:
        raise SeriesTooShort("need at least two samples")
    t = np.array([s.window.start for s in series.samples], dtype=np.float64) / SECONDS_PER_DAY
    return derivative(series.values(field), t)


def derivative(values: np.ndarray, t_days: np.ndarray) -> np.ndarray:
    if len(values) < 2:
        raise SeriesTooShort("need at least two samples")
    return np.gradient(np.asarray(values, dtype=np.float64), t_days, edge_order=1)
