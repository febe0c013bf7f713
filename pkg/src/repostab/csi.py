"""Composite Stability Index: per-component normalisation, weighted sum,
classification, and diagnostics over the resulting series."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .metrics import SeriesTooShort, derivative
from .model import (
    COMPONENTS,
    SECONDS_PER_DAY,
    ConvergenceReport,
    CsiEntry,
    CsiSeries,
    MetricSample,
    MetricSeries,
    StabilityConfig,
    StabilityVerdict,
)

DEFAULT_TAIL_FRACTION = 0.25
DEFAULT_EPS_STD = 0.05
DEFAULT_EPS_SLOPE = 0.001


class RegimeBoundary(ValueError):
    """A perturbation straddles the edge of the normaliser's linear piece."""


def normalize(x: float, mu: float, sigma: float) -> float:
    """Tent map onto [0, 1]: 1 at the target, falling linearly to 0 at +-sigma."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    dev = abs(x - mu)
    if not dev <= sigma:
        return 0.0
    return max(0.0, 1.0 - dev / sigma)


def weighted_sum(phis: tuple[float, float, float, float], config: StabilityConfig) -> float:
    # fixed evaluation order so stored csi values reconstruct bit-for-bit
    phi_c, phi_i, phi_p, phi_a = phis
    total = config.w_c * phi_c + config.w_i * phi_i + config.w_p * phi_p + config.w_a * phi_a
    return min(1.0, max(0.0, total))


def component_phis(sample: MetricSample, config: StabilityConfig) -> tuple[float, float, float, float]:
    """phi for each component. The commit component is scored on cv_c, since
    its target is a coefficient of variation; inactive components score 1."""
    out = []
    for k in COMPONENTS:
        if k in sample.inactive_components:
            out.append(1.0)
            continue
        mu, sigma = config.target(k)
        out.append(normalize(sample.raw(k), mu, sigma))
    return tuple(out)


def classify(csi: float, threshold: float) -> str:
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    return "stable" if csi >= threshold else "unstable"


def csi_at(sample: MetricSample, config: StabilityConfig) -> CsiEntry:
    phis = component_phis(sample, config)
    csi = weighted_sum(phis, config)
    return CsiEntry(
        window=sample.window,
        phi_c=phis[0],
        phi_i=phis[1],
        phi_p=phis[2],
        phi_a=phis[3],
        csi=csi,
        stable=classify(csi, config.csi_threshold) == "stable",
        inactive_components=sample.inactive_components,
    )


def csi_series(series: MetricSeries, config: StabilityConfig) -> CsiSeries:
    if not len(series):
        raise SeriesTooShort("empty metric series")
    return CsiSeries(tuple(csi_at(s, config) for s in series.samples), config, series)


def convergence_report(
    csi: CsiSeries,
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
    eps_std: float = DEFAULT_EPS_STD,
    eps_slope: float = DEFAULT_EPS_SLOPE,
) -> ConvergenceReport:
    """Decide whether the trailing part of a CSI series has settled.

    Converged means, over the last ``tail_fraction`` of windows: population
    std <= eps_std, |least-squares slope| <= eps_slope per day, and no jump
    between consecutive windows larger than 3 * eps_std.
    """
    n = len(csi)
    if n < 10:
        raise SeriesTooShort("convergence needs at least 10 windows")
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    m = max(3, math.ceil(tail_fraction * n))
    values = csi.csi[-m:]
    t_days = csi.starts[-m:] / SECONDS_PER_DAY

    tail_std = float(values.std())
    slope = float(np.polyfit(t_days - t_days[0], values, 1)[0])
    max_jump = float(np.max(np.abs(np.diff(values))))

    dcdt_tail = math.nan
    if csi.series is not None and len(csi.series) >= 2:
        c = csi.series.values("c")
        t_all = csi.starts / SECONDS_PER_DAY
        dcdt_tail = float(np.mean(derivative(c, t_all)[-m:]))

    converged = tail_std <= eps_std and abs(slope) <= eps_slope and max_jump <= 3 * eps_std
    return ConvergenceReport(
        converged=converged,
        limit_estimate=float(values.mean()) if converged else None,
        tail_std=tail_std,
        trend_slope=slope,
        dcdt_tail=dcdt_tail,
        max_jump=max_jump,
        tail_windows=m,
    )


def lipschitz_check(
    sample: MetricSample, config: StabilityConfig, delta: float, component: str
) -> bool:
    """Perturb one raw component by ``delta`` and test |dCSI| <= w_k |delta| / sigma_k.

    Raises RegimeBoundary if the move crosses |x - mu_k| = sigma_k, where the
    normaliser is only piecewise continuous.
    """
    if component not in COMPONENTS:
        raise ValueError(f"unknown component {component!r}")
    if component in sample.inactive_components:
        raise ValueError(f"component {component!r} is inactive in this sample")
    mu, sigma = config.target(component)
    x0 = sample.raw(component)
    x1 = x0 + delta
    if not (math.isfinite(x0) and math.isfinite(x1)):
        raise RegimeBoundary("perturbation leaves the finite domain")
    inside0, inside1 = abs(x0 - mu) < sigma, abs(x1 - mu) < sigma
    if inside0 != inside1 or abs(x0 - mu) == sigma or abs(x1 - mu) == sigma:
        raise RegimeBoundary(f"{component}: {x0!r} -> {x1!r} crosses |x - mu| = sigma")
    if x1 < 0:
        raise RegimeBoundary("perturbation makes the metric negative")

    field = "cv_c" if component == "c" else component
    moved = replace(sample, **{field: x1})
    change = abs(csi_at(moved, config).csi - csi_at(sample, config).csi)
    return change <= config.weight(component) * abs(delta) / sigma + 1e-12


@dataclass(frozen=True)
class Finding:
    component: str
    criterion: str
    windows: tuple[int, ...]
    message: str
    intervention: str


INTERVENTIONS = {
    "commit_pattern": (
        "development cycle irregularity",
        "restructure sprint planning so commits land at a steadier rhythm",
    ),
    "issue_management": (
        "issue backlog growth",
        "triage and close stale issues; shorten time-to-resolution",
    ),
    "pr_processing": (
        "review process inefficiency",
        "redistribute review responsibilities to speed up pull request processing",
    ),
    "engagement": (
        "declining community participation",
        "re-engage contributors on open issues and pull requests",
    ),
}

_CRITERION_OF = dict(zip(COMPONENTS, INTERVENTIONS))
_LABEL = {
    "commit_pattern": "commit pattern",
    "issue_management": "issue management",
    "pr_processing": "pull request processing",
    "engagement": "community engagement",
}


def diagnose(csi: CsiSeries, verdict: StabilityVerdict) -> list[Finding]:
    """One finding per troubled component.

    A component is troubled when its criterion failed, or when it scores
    below the CSI threshold in a window whose CSI is itself sub-threshold.
    """
    threshold = csi.config.csi_threshold
    failed = {c.criterion: c for c in verdict.criteria if not c.passed}
    findings = []
    for k in COMPONENTS:
        criterion = _CRITERION_OF[k]
        windows = set(failed[criterion].violations) if criterion in failed else set()
        weak = {
            e.window.start
            for e in csi.entries
            if not e.stable and e.phi(k) < threshold and k not in e.inactive_components
        }
        windows |= weak
        if not windows:
            continue
        category, action = INTERVENTIONS[criterion]
        reasons = []
        if criterion in failed:
            reasons.append("criterion failed")
        if weak:
            reasons.append(f"normalised score below {threshold:g} in {len(weak)} unstable windows")
        findings.append(
            Finding(
                component=k,
                criterion=criterion,
                windows=tuple(sorted(windows)),
                message=f"{_LABEL[criterion]}: {category} ({'; '.join(reasons)})",
                intervention=action,
            )
        )
    return findings
