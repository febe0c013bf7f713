"""Shared domain types: events, the validated log, windows, samples and config.

Timestamps are integer UTC epoch seconds throughout; durations are fractional
days of 86400 s.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from functools import cached_property, lru_cache
from typing import Iterable

import numpy as np

SECONDS_PER_DAY = 86400


class EventKind(str, enum.Enum):
    # declaration order is the tie-break order for equal timestamps
    COMMIT = "commit"
    ISSUE_OPENED = "issue_opened"
    ISSUE_CLOSED = "issue_closed"
    PR_OPENED = "pr_opened"
    PR_MERGED = "pr_merged"
    PR_CLOSED = "pr_closed"
    COMMENT = "comment"

    @property
    def rank(self) -> int:
        return _KIND_RANK[self]

    @property
    def is_close(self) -> bool:
        return self in (EventKind.ISSUE_CLOSED, EventKind.PR_MERGED, EventKind.PR_CLOSED)


_KIND_RANK = {kind: n for n, kind in enumerate(EventKind)}

COMPONENTS = ("c", "i", "p", "a")


class LogError(ValueError):
    """Referential-integrity failure in an event list."""

    def __init__(self, message: str, event_id: str | None = None):
        super().__init__(message)
        self.event_id = event_id


class DanglingRef(LogError):
    pass


class DuplicateEvent(LogError):
    pass


class CloseBeforeOpen(LogError):
    pass


class EmptyLog(LogError):
    pass


@lru_cache(maxsize=4096)
def _day_epoch(date: str) -> int:
    return int(datetime.fromisoformat(date).replace(tzinfo=timezone.utc).timestamp())


@lru_cache(maxsize=4096)
def _day_string(day: int) -> str:
    return datetime.fromtimestamp(day * 86400, tz=timezone.utc).strftime("%Y-%m-%d")


def parse_timestamp(text: str) -> int:
    """RFC3339 string to epoch seconds. Naive timestamps are rejected."""
    # fast path for the canonical YYYY-MM-DDTHH:MM:SSZ form
    if len(text) == 20 and text[10] == "T" and text[19] == "Z" and text[13] == text[16] == ":":
        hh, mm, ss = text[11:13], text[14:16], text[17:19]
        if (hh + mm + ss).isdigit() and int(hh) < 24 and int(mm) < 60 and int(ss) < 60:
            return _day_epoch(text[:10]) + int(hh) * 3600 + int(mm) * 60 + int(ss)
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        raise ValueError(f"timestamp without offset: {text!r}")
    return int(dt.timestamp())


def format_timestamp(ts: int | float) -> str:
    day, sec = divmod(int(ts), 86400)
    return f"{_day_string(day)}T{sec // 3600:02d}:{sec // 60 % 60:02d}:{sec % 60:02d}Z"


@dataclass(frozen=True, slots=True)
class Event:
    """One repository action.

    Close events (``issue_closed``, ``pr_merged``, ``pr_closed``) carry the id
    of the item they close in ``ref``; their own ``id`` defaults to that ref.
    """

    kind: EventKind
    id: str
    ts: int
    actor: str
    ref: str | None = None

    def __post_init__(self):
        if not isinstance(self.kind, EventKind):
            object.__setattr__(self, "kind", EventKind(self.kind))
        if not self.actor:
            raise ValueError(f"event {self.id!r} has an empty actor")
        if isinstance(self.ts, bool) or not isinstance(self.ts, (int, np.integer)):
            raise TypeError(f"event {self.id!r}: ts must be integer epoch seconds")
        object.__setattr__(self, "ts", int(self.ts))
        if self.kind.is_close and not self.ref:
            raise ValueError(f"{self.kind.value} event needs a ref")

    @classmethod
    def close(cls, kind: EventKind | str, ref: str, ts: int, actor: str) -> "Event":
        return cls(EventKind(kind), ref, ts, actor, ref)

    def sort_key(self) -> tuple[int, int, str]:
        return (self.ts, self.kind.rank, self.id)


@dataclass(frozen=True)
class RepositoryLog:
    """Time-ordered, referentially valid event collection. Build with :func:`validate_log`."""

    events: tuple[Event, ...]
    span: tuple[int, int]

    @property
    def span_days(self) -> float:
        return (self.span[1] - self.span[0]) / SECONDS_PER_DAY

    @cached_property
    def columns(self) -> "LogColumns":
        return LogColumns.from_events(self.events)

    def __len__(self) -> int:
        return len(self.events)


def validate_log(events: Iterable[Event]) -> RepositoryLog:
    """Sort events deterministically and check open/close linkage."""
    ordered = sorted(events, key=Event.sort_key)
    if not ordered:
        raise EmptyLog("no events")

    opened: dict[tuple[str, str], int] = {}
    seen: set[tuple[EventKind, str]] = set()
    for ev in ordered:
        key = (ev.kind, ev.id)
        if key in seen:
            raise DuplicateEvent(f"duplicate {ev.kind.value} event {ev.id!r}", ev.id)
        seen.add(key)
        if ev.kind is EventKind.ISSUE_OPENED:
            opened[("issue", ev.id)] = ev.ts
        elif ev.kind is EventKind.PR_OPENED:
            opened[("pr", ev.id)] = ev.ts

    pr_finished: set[str] = set()
    for ev in ordered:
        if not ev.kind.is_close:
            continue
        stream = "issue" if ev.kind is EventKind.ISSUE_CLOSED else "pr"
        open_ts = opened.get((stream, ev.ref))
        if open_ts is None:
            raise DanglingRef(f"{ev.kind.value} refers to unknown {stream} {ev.ref!r}", ev.ref)
        if ev.ts < open_ts:
            raise CloseBeforeOpen(f"{ev.kind.value} of {ev.ref!r} precedes its opening", ev.ref)
        if stream == "pr":
            if ev.ref in pr_finished:
                raise DuplicateEvent(f"pr {ev.ref!r} is both merged and closed", ev.ref)
            pr_finished.add(ev.ref)

    return RepositoryLog(tuple(ordered), (ordered[0].ts, ordered[-1].ts))


@dataclass(frozen=True)
class LogColumns:
    """Columnar numpy view of a log, used by the window metrics.

    Missing close times are stored as +inf so interval tests need no masks.
    """

    commit_ts: np.ndarray
    issue_open: np.ndarray
    issue_close: np.ndarray
    pr_open: np.ndarray
    pr_end: np.ndarray
    pr_merge: np.ndarray
    comment_ts: np.ndarray
    engage_ts: np.ndarray
    engage_actor: np.ndarray
    actor_first_seen: np.ndarray

    @classmethod
    def from_events(cls, events: tuple[Event, ...]) -> "LogColumns":
        actors: dict[str, int] = {}
        first_seen: list[int] = []
        commit_ts: list[int] = []
        comment_ts: list[int] = []
        engage_ts: list[int] = []
        engage_actor: list[int] = []
        issue_open: dict[str, int] = {}
        issue_close: dict[str, int] = {}
        pr_open: dict[str, int] = {}
        pr_merge: dict[str, int] = {}
        pr_close: dict[str, int] = {}

        for ev in events:
            code = actors.get(ev.actor)
            if code is None:
                code = actors[ev.actor] = len(first_seen)
                first_seen.append(ev.ts)
            kind = ev.kind
            if kind is EventKind.COMMIT:
                commit_ts.append(ev.ts)
            elif kind is EventKind.COMMENT:
                comment_ts.append(ev.ts)
            elif kind is EventKind.ISSUE_OPENED:
                issue_open[ev.id] = ev.ts
            elif kind is EventKind.ISSUE_CLOSED:
                issue_close[ev.ref] = ev.ts
            elif kind is EventKind.PR_OPENED:
                pr_open[ev.id] = ev.ts
            elif kind is EventKind.PR_MERGED:
                pr_merge[ev.ref] = ev.ts
            else:
                pr_close[ev.ref] = ev.ts
            if kind in (EventKind.COMMIT, EventKind.COMMENT, EventKind.PR_OPENED):
                engage_ts.append(ev.ts)
                engage_actor.append(code)

        inf = math.inf
        issue_ids = list(issue_open)
        pr_ids = list(pr_open)
        merge = [pr_merge.get(k, inf) for k in pr_ids]
        return cls(
            commit_ts=np.asarray(commit_ts, dtype=np.float64),
            issue_open=np.asarray([issue_open[k] for k in issue_ids], dtype=np.float64),
            issue_close=np.asarray([issue_close.get(k, inf) for k in issue_ids], dtype=np.float64),
            pr_open=np.asarray([pr_open[k] for k in pr_ids], dtype=np.float64),
            pr_end=np.asarray(
                [min(m, pr_close.get(k, inf)) for k, m in zip(pr_ids, merge)], dtype=np.float64
            ),
            pr_merge=np.asarray(merge, dtype=np.float64),
            comment_ts=np.asarray(comment_ts, dtype=np.float64),
            engage_ts=np.asarray(engage_ts, dtype=np.float64),
            engage_actor=np.asarray(engage_actor, dtype=np.int64),
            actor_first_seen=np.asarray(first_seen, dtype=np.float64),
        )


@dataclass(frozen=True, slots=True)
class Window:
    start: int
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("window length must be positive")

    @property
    def end(self) -> int:
        return self.start + round(self.dt * SECONDS_PER_DAY)


@dataclass(frozen=True)
class MetricSample:
    """Windowed state vector plus auxiliary statistics.

    ``i``, ``p`` and ``a`` are None when their component is inactive (empty
    denominator); ``cv_c`` is +inf for a window without commits.
    """

    window: Window
    c: float
    i: float | None
    p: float | None
    a: float | None
    cv_c: float
    t_res: float
    t_rev: float
    active_ratio: float
    inactive_components: frozenset[str] = frozenset()

    def __post_init__(self):
        for name in ("c", "i", "p", "a", "t_res", "t_rev", "active_ratio"):
            value = getattr(self, name)
            if value is None:
                continue
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")
        if math.isnan(self.cv_c) or self.cv_c < 0:
            raise ValueError(f"cv_c must be non-negative, got {self.cv_c}")
        if self.active_ratio > 1:
            raise ValueError("active_ratio exceeds 1")
        unknown = self.inactive_components - set(COMPONENTS)
        if unknown:
            raise ValueError(f"unknown components {sorted(unknown)}")

    def raw(self, component: str) -> float | None:
        """The value fed to the normaliser for ``component`` (cv_c for c)."""
        return self.cv_c if component == "c" else getattr(self, component)


DAMPENING_MODES = ("normalized", "raw_days")


@dataclass(frozen=True)
class StabilityConfig:
    """Thresholds, CSI weights, normalisation targets and the window grid.

    Defaults are the published framework constants.
    """

    alpha_c: float = 0.5
    beta_i: float = 0.3
    tau_i_days: float = 14.0
    beta_p: float = 0.4
    tau_p_days: float = 5.0
    gamma_a: float = 0.25
    delta_a: float = 0.15
    w_c: float = 0.3
    w_i: float = 0.25
    w_p: float = 0.25
    w_a: float = 0.2
    mu_c: float = 0.25
    sigma_c: float = 0.25
    mu_i: float = 0.4
    sigma_i: float = 0.1
    mu_p: float = 0.5
    sigma_p: float = 0.1
    mu_a: float = 0.35
    sigma_a: float = 0.1
    csi_threshold: float = 0.7
    window_days: float = 14.0
    stride_days: float = 1.0
    dampening_mode: str = "normalized"
    violation_tolerance: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if f.name == "dampening_mode":
                continue
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError(f"{f.name} must be a number")
            if not math.isfinite(value):
                raise ValueError(f"{f.name} must be finite")
            object.__setattr__(self, f.name, float(value))
        for name in ("w_c", "w_i", "w_p", "w_a"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {sum(self.weights)!r}, not 1")
        for name in ("sigma_c", "sigma_i", "sigma_p", "sigma_a"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in self.threshold_names:
            if getattr(self, name) <= 0:
                raise ValueError(f"threshold {name} must be positive")
        if not 0 < self.csi_threshold < 1:
            raise ValueError("csi_threshold must lie in (0, 1)")
        if self.window_days <= 0 or self.stride_days <= 0:
            raise ValueError("window_days and stride_days must be positive")
        if self.dampening_mode not in DAMPENING_MODES:
            raise ValueError(f"dampening_mode must be one of {DAMPENING_MODES}")
        if not 0 <= self.violation_tolerance < 1:
            raise ValueError("violation_tolerance must lie in [0, 1)")

    threshold_names = ("alpha_c", "beta_i", "tau_i_days", "beta_p", "tau_p_days", "gamma_a", "delta_a")

    @property
    def theta(self) -> tuple[float, ...]:
        return tuple(getattr(self, n) for n in self.threshold_names)

    @property
    def weights(self) -> tuple[float, float, float, float]:
        return (self.w_c, self.w_i, self.w_p, self.w_a)

    @property
    def targets(self) -> tuple[float, ...]:
        return (
            self.mu_c, self.sigma_c, self.mu_i, self.sigma_i,
            self.mu_p, self.sigma_p, self.mu_a, self.sigma_a,
        )

    def weight(self, component: str) -> float:
        return getattr(self, f"w_{component}")

    def target(self, component: str) -> tuple[float, float]:
        return getattr(self, f"mu_{component}"), getattr(self, f"sigma_{component}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class CriterionResult:
    criterion: str
    passed: bool
    violations: tuple[int, ...]
    worst: float | None
    checked: int
    skipped: int
    note: str = ""
    worst_secondary: float | None = None
    worst_window: int | None = None


@dataclass(frozen=True)
class StabilityVerdict:
    commit_pattern: CriterionResult
    issue_management: CriterionResult
    pr_processing: CriterionResult
    engagement: CriterionResult
    theta: tuple[float, ...]
    overall: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "overall", all(c.passed for c in self.criteria))

    @property
    def criteria(self) -> tuple[CriterionResult, ...]:
        return (self.commit_pattern, self.issue_management, self.pr_processing, self.engagement)


@dataclass(frozen=True)
class CsiEntry:
    window: Window
    phi_c: float
    phi_i: float
    phi_p: float
    phi_a: float
    csi: float
    stable: bool
    inactive_components: frozenset[str] = frozenset()

    def phi(self, component: str) -> float:
        return getattr(self, f"phi_{component}")


@dataclass(frozen=True)
class ConvergenceReport:
    converged: bool
    limit_estimate: float | None
    tail_std: float
    trend_slope: float
    dcdt_tail: float
    max_jump: float = 0.0
    tail_windows: int = 0

    def __post_init__(self):
        if (self.limit_estimate is not None) != self.converged:
            raise ValueError("limit_estimate must be present exactly when converged")


@dataclass(frozen=True)
class MetricSeries:
    samples: tuple[MetricSample, ...]
    config_used: StabilityConfig

    def __post_init__(self):
        starts = [s.window.start for s in self.samples]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("window starts must be strictly increasing")

    def __len__(self) -> int:
        return len(self.samples)

    def values(self, name: str) -> np.ndarray:
        """Column of a sample field as floats; inactive (None) entries become NaN."""
        return np.array(
            [math.nan if (v := getattr(s, name)) is None else v for s in self.samples],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class CsiSeries:
    entries: tuple[CsiEntry, ...]
    config: StabilityConfig
    series: MetricSeries | None = None

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def csi(self) -> np.ndarray:
        return np.array([e.csi for e in self.entries], dtype=np.float64)

    @property
    def starts(self) -> np.ndarray:
        return np.array([e.window.start for e in self.entries], dtype=np.float64)
