"""Analysis bundles and their CSV, JSON and plain-text renderings.

Formatters only read the bundle; nothing is recomputed there.

JSON schema 1, top level (keys sorted):
``schema``, ``tool``, ``provenance``, ``config``, ``windows``, ``verdict``,
``convergence``, ``findings``. Window timestamps are RFC3339 UTC strings.
Non-finite numbers (a commit CV for a window without commits) are ``null``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

from . import __version__
from .csi import Finding, convergence_report, csi_series, diagnose
from .metrics import SeriesTooShort, compute_series
from .model import (
    COMPONENTS,
    ConvergenceReport,
    CriterionResult,
    CsiEntry,
    CsiSeries,
    MetricSample,
    MetricSeries,
    RepositoryLog,
    StabilityConfig,
    StabilityVerdict,
    Window,
    format_timestamp,
    parse_timestamp,
)
from .stability import evaluate

SCHEMA_VERSION = 1
TOOL_NAME = "repostab"

CSV_HEADER = (
    "window_start,window_end,c,cv_c,i,t_res,p,t_rev,a,active_ratio,"
    "phi_c,phi_i,phi_p,phi_a,csi,stable"
)


@dataclass(frozen=True)
class AnalysisBundle:
    series: MetricSeries
    verdict: StabilityVerdict
    csi: CsiSeries
    convergence: ConvergenceReport | None
    findings: tuple[Finding, ...]
    config: StabilityConfig
    provenance: dict[str, Any] = field(default_factory=dict)
    tool_version: str = __version__

    def __post_init__(self):
        object.__setattr__(self, "findings", tuple(self.findings))
        if len(self.series) != len(self.csi):
            raise ValueError("metric and CSI series differ in length")


def _num(x: float | None) -> str:
    if x is None:
        return ""
    return f"{x:.6f}"


def emit_csv(bundle: AnalysisBundle) -> str:
    """One row per window. Inactive components leave their value and its
    companion statistic empty; their phi is still written (1.000000)."""
    rows = [CSV_HEADER]
    for s, e in zip(bundle.series.samples, bundle.csi.entries):
        off = s.inactive_components
        cells = [
            format_timestamp(s.window.start),
            format_timestamp(s.window.end),
            _num(s.c),
            _num(s.cv_c),
            _num(None if "i" in off else s.i),
            _num(None if "i" in off else s.t_res),
            _num(None if "p" in off else s.p),
            _num(None if "p" in off else s.t_rev),
            _num(None if "a" in off else s.a),
            _num(None if "a" in off else s.active_ratio),
            _num(e.phi_c),
            _num(e.phi_i),
            _num(e.phi_p),
            _num(e.phi_a),
            _num(e.csi),
            "true" if e.stable else "false",
        ]
        rows.append(",".join(cells))
    return "\n".join(rows) + "\n"


def _finite(x: float | None) -> float | None:
    return x if x is not None and math.isfinite(x) else None


def _criterion_doc(c: CriterionResult) -> dict:
    return {
        "passed": c.passed,
        "violations": [format_timestamp(t) for t in c.violations],
        "worst": _finite(c.worst),
        "worst_window": None if c.worst_window is None else format_timestamp(c.worst_window),
        "worst_secondary": _finite(c.worst_secondary),
        "checked": c.checked,
        "skipped": c.skipped,
        "note": c.note,
    }


def to_dict(bundle: AnalysisBundle) -> dict:
    windows = []
    for s, e in zip(bundle.series.samples, bundle.csi.entries):
        windows.append(
            {
                "start": format_timestamp(s.window.start),
                "end": format_timestamp(s.window.end),
                "dt_days": s.window.dt,
                "c": s.c,
                "cv_c": _finite(s.cv_c),
                "i": s.i,
                "t_res": s.t_res,
                "p": s.p,
                "t_rev": s.t_rev,
                "a": s.a,
                "active_ratio": s.active_ratio,
                "inactive": sorted(s.inactive_components),
                "phi": {k: e.phi(k) for k in COMPONENTS},
                "csi": e.csi,
                "stable": e.stable,
            }
        )
    v = bundle.verdict
    conv = bundle.convergence
    conv_doc = None
    if conv is not None:
        conv_doc = {
            "converged": conv.converged,
            "limit_estimate": conv.limit_estimate,
            "tail_std": conv.tail_std,
            "trend_slope": conv.trend_slope,
            "dcdt_tail": _finite(conv.dcdt_tail),
            "max_jump": conv.max_jump,
            "tail_windows": conv.tail_windows,
        }
    return {
        "schema": SCHEMA_VERSION,
        "tool": {"name": TOOL_NAME, "version": bundle.tool_version},
        "provenance": bundle.provenance,
        "config": bundle.config.to_dict(),
        "windows": windows,
        "verdict": {
            "overall": v.overall,
            "theta": list(v.theta),
            "criteria": {c.criterion: _criterion_doc(c) for c in v.criteria},
        },
        "convergence": conv_doc,
        "findings": [
            {
                "component": f.component,
                "criterion": f.criterion,
                "windows": [format_timestamp(t) for t in f.windows],
                "message": f.message,
                "intervention": f.intervention,
            }
            for f in bundle.findings
        ],
    }


def emit_json(bundle: AnalysisBundle) -> str:
    return json.dumps(to_dict(bundle), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _inf_if_none(x: float | None) -> float:
    return math.inf if x is None else x


def from_dict(doc: dict) -> AnalysisBundle:
    """Rebuild a bundle from :func:`to_dict` output."""
    if doc.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {doc.get('schema')!r}")
    config = StabilityConfig(**doc["config"])
    samples, entries = [], []
    for w in doc["windows"]:
        window = Window(parse_timestamp(w["start"]), w["dt_days"])
        inactive = frozenset(w["inactive"])
        samples.append(
            MetricSample(
                window=window,
                c=w["c"],
                i=w["i"],
                p=w["p"],
                a=w["a"],
                cv_c=_inf_if_none(w["cv_c"]),
                t_res=w["t_res"],
                t_rev=w["t_rev"],
                active_ratio=w["active_ratio"],
                inactive_components=inactive,
            )
        )
        phi = w["phi"]
        entries.append(
            CsiEntry(window, phi["c"], phi["i"], phi["p"], phi["a"], w["csi"], w["stable"], inactive)
        )
    series = MetricSeries(tuple(samples), config)

    crit = {}
    for name, c in doc["verdict"]["criteria"].items():
        worst = c["worst"]
        if worst is None and c["checked"] and name == "commit_pattern":
            worst = math.inf
        crit[name] = CriterionResult(
            criterion=name,
            passed=c["passed"],
            violations=tuple(parse_timestamp(t) for t in c["violations"]),
            worst=worst,
            checked=c["checked"],
            skipped=c["skipped"],
            note=c["note"],
            worst_secondary=c["worst_secondary"],
            worst_window=None if c["worst_window"] is None else parse_timestamp(c["worst_window"]),
        )
    verdict = StabilityVerdict(theta=tuple(doc["verdict"]["theta"]), **crit)

    cv = doc["convergence"]
    convergence = None if cv is None else ConvergenceReport(
        converged=cv["converged"],
        limit_estimate=cv["limit_estimate"],
        tail_std=cv["tail_std"],
        trend_slope=cv["trend_slope"],
        dcdt_tail=math.nan if cv["dcdt_tail"] is None else cv["dcdt_tail"],
        max_jump=cv["max_jump"],
        tail_windows=cv["tail_windows"],
    )
    findings = tuple(
        Finding(
            f["component"],
            f["criterion"],
            tuple(parse_timestamp(t) for t in f["windows"]),
            f["message"],
            f["intervention"],
        )
        for f in doc["findings"]
    )
    return AnalysisBundle(
        series=series,
        verdict=verdict,
        csi=CsiSeries(tuple(entries), config, series),
        convergence=convergence,
        findings=findings,
        config=config,
        provenance=doc["provenance"],
        tool_version=doc["tool"]["version"],
    )


def parse_json(text: str) -> AnalysisBundle:
    return from_dict(json.loads(text))


def analyze(
    log: RepositoryLog, config: StabilityConfig, provenance: dict[str, Any] | None = None
) -> AnalysisBundle:
    """Run metrics, criteria, CSI, convergence and diagnosis on one log."""
    series = compute_series(log, config)
    verdict = evaluate(series, config)
    scores = csi_series(series, config)
    try:
        convergence = convergence_report(scores)
    except SeriesTooShort:
        convergence = None
    return AnalysisBundle(
        series=series,
        verdict=verdict,
        csi=scores,
        convergence=convergence,
        findings=tuple(diagnose(scores, verdict)),
        config=config,
        provenance=dict(provenance or {}),
    )


_WORST_LABEL = {
    "commit_pattern": "max cv_c",
    "issue_management": "min i",
    "pr_processing": "min p",
    "engagement": "min a",
}


def render_summary(bundle: AnalysisBundle) -> str:
    v = bundle.verdict
    lines = [f"OVERALL: {'STABLE' if v.overall else 'UNSTABLE'}"]
    src = bundle.provenance.get("input") or bundle.provenance.get("fetch")
    if src:
        lines.append(f"input: {src}")
    lines.append(f"windows: {len(bundle.csi)}")
    lines.append("")
    lines.append("criteria:")
    for c in v.criteria:
        status = "PASS" if c.passed else "FAIL"
        detail = f"{len(c.violations)}/{c.checked} windows in violation"
        if c.worst is not None:
            detail += f"; {_WORST_LABEL[c.criterion]} {c.worst:.6f} at {format_timestamp(c.worst_window)}"
        if c.skipped:
            detail += f"; {c.skipped} inactive windows skipped"
        lines.append(f"  {c.criterion}: {status} ({detail})")
    if bundle.csi.entries:
        last = bundle.csi.entries[-1]
        label = "stable" if last.stable else "unstable"
        lines.append("")
        lines.append(f"latest CSI: {last.csi:.6f} ({label}) for window starting {format_timestamp(last.window.start)}")
    conv = bundle.convergence
    if conv is None:
        lines.append("convergence: not reached (too few windows to assess)")
    elif conv.converged:
        lines.append(f"convergence: reached, limit {conv.limit_estimate:.6f} (tail std {conv.tail_std:.6f})")
    else:
        lines.append(
            f"convergence: not reached (tail std {conv.tail_std:.6f}, "
            f"slope {conv.trend_slope:+.6f}/day, max jump {conv.max_jump:.6f})"
        )
    lines.append("")
    if bundle.findings:
        lines.append("findings:")
        for f in bundle.findings:
            lines.append(f"  - {f.message}; {len(f.windows)} windows")
            lines.append(f"    suggested: {f.intervention}")
    else:
        lines.append("findings: none")
    return "\n".join(lines) + "\n"
