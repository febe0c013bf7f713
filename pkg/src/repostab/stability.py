"""Threshold criteria over a metric series.

Every criterion is evaluated on the discrete window grid. Windows where the
relevant component is inactive are skipped and counted, never scored.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .metrics import SeriesTooShort, estimate_derivative
from .model import (
    CriterionResult,
    MetricSample,
    MetricSeries,
    StabilityConfig,
    StabilityVerdict,
)

CRITERIA = ("commit_pattern", "issue_management", "pr_processing", "engagement")


def _judge(
    name: str,
    samples: Sequence[MetricSample],
    component: str | None,
    violates: Callable[[MetricSample], bool],
    primary: str,
    secondary: str | None,
    tolerance: float,
    note: str = "",
) -> CriterionResult:
    violations: list[int] = []
    active = []
    for s in samples:
        if component is not None and component in s.inactive_components:
            continue
        active.append(s)
        if violates(s):
            violations.append(s.window.start)
    checked = len(active)
    worst = worst_secondary = worst_window = None
    if active:
        # cv_c, t_res and t_rev are bad when large; rates and ratios when small
        k = _extreme([getattr(s, primary) for s in active], primary)
        worst, worst_window = getattr(active[k], primary), active[k].window.start
        if secondary:
            j = _extreme([getattr(s, secondary) for s in active], secondary)
            worst_secondary = getattr(active[j], secondary)
    passed = len(violations) <= tolerance * checked
    if checked == 0:
        note = (note + "; " if note else "") + "all windows inactive"
    return CriterionResult(
        name, passed, tuple(violations), worst, checked, len(samples) - checked, note,
        worst_secondary, worst_window,
    )


def _extreme(values: list[float], field: str) -> int:
    """Index of the worst value; the earliest window wins ties."""
    arr = np.asarray(values, dtype=np.float64)
    return int(np.argmax(arr) if field in ("cv_c", "t_res", "t_rev") else np.argmin(arr))


def check_commit_pattern(
    series: MetricSeries, alpha_c: float, tolerance: float = 0.0
) -> CriterionResult:
    """CV of daily commits must stay at or below ``alpha_c`` in every window.

    The largest absolute derivative of c(t) is attached as a diagnostic note.
    """
    note = ""
    try:
        dcdt = estimate_derivative(series, "c")
        note = f"max |dc/dt| = {float(np.nanmax(np.abs(dcdt))):.6f} per day^2"
    except SeriesTooShort:
        pass
    return _judge(
        "commit_pattern",
        series.samples,
        None,
        lambda s: not s.cv_c <= alpha_c,
        "cv_c",
        None,
        tolerance,
        note,
    )


def check_issue_management(
    series: MetricSeries, beta_i: float, tau_i: float, tolerance: float = 0.0
) -> CriterionResult:
    return _judge(
        "issue_management",
        series.samples,
        "i",
        lambda s: s.i < beta_i or s.t_res > tau_i,
        "i",
        "t_res",
        tolerance,
    )


def check_pr_processing(
    series: MetricSeries, beta_p: float, tau_p: float, tolerance: float = 0.0
) -> CriterionResult:
    return _judge(
        "pr_processing",
        series.samples,
        "p",
        lambda s: s.p < beta_p or s.t_rev > tau_p,
        "p",
        "t_rev",
        tolerance,
    )


def check_engagement(
    series: MetricSeries, gamma_a: float, delta_a: float, tolerance: float = 0.0
) -> CriterionResult:
    return _judge(
        "engagement",
        series.samples,
        "a",
        lambda s: s.a < gamma_a or s.active_ratio < delta_a,
        "a",
        "active_ratio",
        tolerance,
    )


def evaluate(series: MetricSeries, config: StabilityConfig) -> StabilityVerdict:
    tol = config.violation_tolerance
    return StabilityVerdict(
        commit_pattern=check_commit_pattern(series, config.alpha_c, tol),
        issue_management=check_issue_management(series, config.beta_i, config.tau_i_days, tol),
        pr_processing=check_pr_processing(series, config.beta_p, config.tau_p_days, tol),
        engagement=check_engagement(series, config.gamma_a, config.delta_a, tol),
        theta=config.theta,
    )

