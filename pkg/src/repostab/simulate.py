"""Seeded synthetic repository histories.

Generative model, per simulated day:

* commits, pull requests and comments arrive as Poisson counts; each event is
  stamped at a uniform second within the day and attributed to a contributor
  drawn in proportion to their activity weight;
* issues are opened at a Poisson rate, by the separate pool of ``reporters``
  when there is one and by contributors otherwise; each issue closes after an
  exponential delay; each PR is merged with probability ``pr_merge_prob``
  (otherwise closed) after an exponential delay;
* comments arrive at ``comment_rate`` per item open at the start of the day
  and reference one of those items.

Day 0 starts with the stationary backlog of open issues and PRs already in
place, all stamped at the start instant.

Random numbers come from numpy's PCG64 bit generator seeded through
``SeedSequence(seed)``. Only raw 64-bit outputs are used; uniforms, Poisson
counts (inversion, rates split into chunks of at most 500), exponentials and
weighted picks are derived from them here, so the stream is fully specified by
this module and does not depend on numpy's distribution samplers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .model import SECONDS_PER_DAY, Event, EventKind, RepositoryLog, validate_log

# 2024-01-01T00:00:00Z
DEFAULT_START = 1704067200


class DisturbanceKind(str, enum.Enum):
    BUG_INFLUX = "bug_influx"
    CONTRIBUTOR_DEPARTURE = "contributor_departure"
    FEATURE_REQUEST_SPIKE = "feature_request_spike"


@dataclass(frozen=True)
class DisturbanceSpec:
    """A perturbation injected at ``at_day``.

    ``magnitude`` is an issue count for bug_influx / feature_request_spike and a
    fraction of contributors for contributor_departure.
    """

    kind: DisturbanceKind
    at_day: int
    magnitude: float
    recovery_days: float = 14.0

    def __post_init__(self):
        object.__setattr__(self, "kind", DisturbanceKind(self.kind))
        if self.at_day < 0:
            raise ValueError("at_day must be non-negative")
        if not self.magnitude > 0:
            raise ValueError("magnitude must be positive")
        if self.kind is DisturbanceKind.CONTRIBUTOR_DEPARTURE and self.magnitude >= 1:
            raise ValueError("departure magnitude is a fraction below 1")
        if not self.recovery_days > 0:
            raise ValueError("recovery_days must be positive")


@dataclass(frozen=True)
class SimulationConfig:
    """Rates of the generative model.

    Units: commit_rate is commits per contributor per day; issue_open_rate and
    pr_open_rate are per day; delays are mean days; comment_rate is comments
    per open item per day. ``reporters`` is a pool of users who only file
    issues (when zero, contributors file them). ``activity_skew`` is the Zipf exponent of the
    contributor activity weights (0 gives equal weights). ``commit_week_pattern``
    multiplies the commit rate week by week, cycling.
    """

    days: int = 365
    seed: int = 0
    contributors: int = 20
    reporters: int = 0
    commit_rate: float = 1.0
    issue_open_rate: float = 10.0
    issue_close_delay: float = 7.0
    pr_open_rate: float = 10.0
    pr_merge_delay: float = 2.0
    pr_merge_prob: float = 0.8
    comment_rate: float = 0.025
    disturbances: tuple[DisturbanceSpec, ...] = ()
    activity_skew: float = 0.0
    commit_week_pattern: tuple[float, ...] = (1.0,)
    feature_delay_factor: float = 3.0
    start: int = DEFAULT_START

    def __post_init__(self):
        object.__setattr__(self, "disturbances", tuple(self.disturbances))
        object.__setattr__(self, "commit_week_pattern", tuple(self.commit_week_pattern))
        if self.days < 1:
            raise ValueError("days must be at least 1")
        if self.contributors < 1:
            raise ValueError("need at least one contributor")
        if self.reporters < 0:
            raise ValueError("reporters must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        for name in ("commit_rate", "issue_open_rate", "pr_open_rate", "comment_rate", "activity_skew"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("issue_close_delay", "pr_merge_delay", "feature_delay_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.pr_merge_prob <= 1:
            raise ValueError("pr_merge_prob must lie in [0, 1]")
        if not self.commit_week_pattern or min(self.commit_week_pattern) < 0:
            raise ValueError("commit_week_pattern needs non-negative entries")
        for d in self.disturbances:
            if d.at_day >= self.days:
                raise ValueError(f"disturbance at day {d.at_day} is outside the {self.days}-day run")


class UnknownScenario(ValueError):
    pass


class _Rng:
    def __init__(self, seed: int):
        self._bits = np.random.PCG64(seed)

    def uniform(self, n: int) -> np.ndarray:
        raw = self._bits.random_raw(n)
        return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def poisson(self, lam: float) -> int:
        total = 0
        while lam > 0:
            chunk = min(lam, 500.0)
            lam -= chunk
            u = float(self.uniform(1)[0])
            k, p = 0, math.exp(-chunk)
            cdf = p
            while u > cdf:
                k += 1
                p *= chunk / k
                cdf += p
                if p == 0.0:
                    break
            total += k
        return total

    def exponential(self, mean: float | np.ndarray, n: int) -> np.ndarray:
        return -np.asarray(mean) * np.log1p(-self.uniform(n))

    def pick(self, cumulative: np.ndarray, n: int) -> np.ndarray:
        u = self.uniform(n) * cumulative[-1]
        return np.minimum(np.searchsorted(cumulative, u, side="right"), len(cumulative) - 1)

    def seconds(self, n: int) -> np.ndarray:
        return (self.uniform(n) * SECONDS_PER_DAY).astype(np.int64)


def activity_weights(config: SimulationConfig) -> np.ndarray:
    ranks = np.arange(1, config.contributors + 1, dtype=np.float64)
    return ranks ** -config.activity_skew


_ISSUE_KINDS = (DisturbanceKind.BUG_INFLUX, DisturbanceKind.FEATURE_REQUEST_SPIKE)


def _elevation(config: SimulationConfig, day: int, kinds: tuple[DisturbanceKind, ...]) -> float:
    extra = 0.0
    for d in config.disturbances:
        if d.kind in kinds and day > d.at_day:
            extra += d.magnitude / d.recovery_days * math.exp(-(day - d.at_day) / d.recovery_days)
    return extra


def _load(config: SimulationConfig, day: int) -> float:
    """Multiplier on issue close delays while maintainers absorb an influx.

    The excess is the injected issue mass relative to the baseline backlog,
    decaying with the disturbance's recovery time constant.
    """
    backlog = max(config.issue_open_rate * config.issue_close_delay, 1.0)
    load = 1.0
    for d in config.disturbances:
        if d.kind is not DisturbanceKind.CONTRIBUTOR_DEPARTURE and day >= d.at_day:
            load += d.magnitude / backlog * math.exp(-(day - d.at_day) / d.recovery_days)
    return load


def simulate(config: SimulationConfig) -> RepositoryLog:
    """Generate a validated log covering days 0..config.days inclusive."""
    rng = _Rng(config.seed)
    names = [f"dev{k:03d}" for k in range(config.contributors)]
    names += [f"user{k:04d}" for k in range(config.reporters)]
    reporter_cum = np.arange(1, config.reporters + 1, dtype=np.float64)
    weights = activity_weights(config)
    full_weight = weights.sum()
    present = np.ones(config.contributors, dtype=bool)
    horizon = config.start + (config.days + 1) * SECONDS_PER_DAY
    departures = sorted(
        (d for d in config.disturbances if d.kind is DisturbanceKind.CONTRIBUTOR_DEPARTURE),
        key=lambda d: d.at_day,
    )

    events: list[Event] = []
    item_ids: list[str] = []
    item_end = np.empty(0, dtype=np.float64)

    def add(kind, ident, ts, actor_idx, ref=None):
        events.append(Event(kind, ident, int(ts), names[actor_idx], ref))

    def reporters_or(cum, n):
        if config.reporters:
            return config.contributors + rng.pick(reporter_cum, n)
        return rng.pick(cum, n)

    # stationary backlog imported at the start: Poisson(rate * mean delay) open
    # items whose remaining lifetimes are exponential (memoryless)
    cum = np.cumsum(weights)
    n = rng.poisson(config.issue_open_rate * config.issue_close_delay)
    delay = np.round(rng.exponential(config.issue_close_delay, n) * SECONDS_PER_DAY).astype(np.int64)
    actors, closers = reporters_or(cum, n), rng.pick(cum, n)
    for j in range(n):
        ident = f"i-backlog-{j:05d}"
        add(EventKind.ISSUE_OPENED, ident, config.start, actors[j])
        add(EventKind.ISSUE_CLOSED, ident, config.start + delay[j], closers[j], ident)
    ends = list(config.start + delay)
    item_ids += [f"i-backlog-{j:05d}" for j in range(n)]
    n = rng.poisson(config.pr_open_rate * config.pr_merge_delay)
    delay = np.round(rng.exponential(config.pr_merge_delay, n) * SECONDS_PER_DAY).astype(np.int64)
    merged = rng.uniform(n) < config.pr_merge_prob
    actors, closers = rng.pick(cum, n), rng.pick(cum, n)
    for j in range(n):
        ident = f"pr-backlog-{j:05d}"
        add(EventKind.PR_OPENED, ident, config.start, actors[j])
        kind = EventKind.PR_MERGED if merged[j] else EventKind.PR_CLOSED
        add(kind, ident, config.start + delay[j], closers[j], ident)
    ends += list(config.start + delay)
    item_ids += [f"pr-backlog-{j:05d}" for j in range(n)]
    item_end = np.asarray(ends, dtype=np.float64)

    for day in range(config.days + 1):
        for d in departures:
            if d.at_day == day:
                # the most active remaining contributors leave first
                order = [k for k in np.argsort(-weights, kind="stable") if present[k]]
                for k in order[: min(round(d.magnitude * config.contributors), len(order) - 1)]:
                    present[k] = False
        cum = np.cumsum(np.where(present, weights, 0.0))
        capacity = cum[-1] / full_weight
        day0 = config.start + day * SECONDS_PER_DAY
        # issues and PRs opened on earlier days and not yet finished
        open_refs = np.flatnonzero(item_end > day0)
        new_ends: list[float] = []

        # commits
        week = config.commit_week_pattern[(day // 7) % len(config.commit_week_pattern)]
        n = rng.poisson(config.commit_rate * config.contributors * capacity * week)
        ts = np.sort(day0 + rng.seconds(n))
        actors = rng.pick(cum, n)
        for j in range(n):
            add(EventKind.COMMIT, f"c{day:05d}-{j:05d}", ts[j], actors[j])

        # issues, including injected mass on disturbance days
        lam = config.issue_open_rate + _elevation(config, day, _ISSUE_KINDS)
        n_regular = rng.poisson(lam)
        mass = [d for d in config.disturbances if d.at_day == day and d.kind in _ISSUE_KINDS]
        n_feature = sum(round(d.magnitude) for d in mass if d.kind is DisturbanceKind.FEATURE_REQUEST_SPIKE)
        n = n_regular + sum(round(d.magnitude) for d in mass)
        ts = day0 + rng.seconds(n)
        actors = reporters_or(cum, n)
        mean_delay = np.full(n, config.issue_close_delay * _load(config, day) / capacity)
        if n_feature:
            mean_delay[n - n_feature:] *= config.feature_delay_factor
        delay = np.round(rng.exponential(mean_delay, n) * SECONDS_PER_DAY).astype(np.int64)
        closers = rng.pick(cum, n)
        for j in range(n):
            ident = f"i{day:05d}-{j:05d}"
            add(EventKind.ISSUE_OPENED, ident, ts[j], actors[j])
            close = ts[j] + delay[j]
            if close < horizon:
                add(EventKind.ISSUE_CLOSED, ident, close, closers[j], ident)
            item_ids.append(ident)
            new_ends.append(close if close < horizon else math.inf)

        # pull requests
        n = rng.poisson(config.pr_open_rate * capacity)
        ts = day0 + rng.seconds(n)
        actors = rng.pick(cum, n)
        merged = rng.uniform(n) < config.pr_merge_prob
        delay = np.round(
            rng.exponential(config.pr_merge_delay / capacity, n) * SECONDS_PER_DAY
        ).astype(np.int64)
        closers = rng.pick(cum, n)
        for j in range(n):
            ident = f"pr{day:05d}-{j:05d}"
            add(EventKind.PR_OPENED, ident, ts[j], actors[j])
            end = ts[j] + delay[j]
            if end < horizon:
                kind = EventKind.PR_MERGED if merged[j] else EventKind.PR_CLOSED
                add(kind, ident, end, closers[j], ident)
            item_ids.append(ident)
            new_ends.append(end if end < horizon else math.inf)

        # comments on items open at the start of the day
        n = rng.poisson(config.comment_rate * len(open_refs) * capacity)
        ts = np.sort(day0 + rng.seconds(n))
        actors = rng.pick(cum, n)
        targets = open_refs[(rng.uniform(n) * len(open_refs)).astype(np.int64)] if n else ()
        for j in range(n):
            add(EventKind.COMMENT, f"m{day:05d}-{j:05d}", ts[j], actors[j], item_ids[targets[j]])

        item_end = np.concatenate((item_end, np.asarray(new_ends, dtype=np.float64)))

    return validate_log(events)


# Undisturbed baseline used by every preset: each component sits at its
# normalisation target, with enough volume that window-to-window noise keeps
# the composite index above the classification threshold.
_BASELINE = SimulationConfig(
    contributors=20,
    reporters=60,
    commit_rate=0.715,
    issue_open_rate=80.0,
    issue_close_delay=8.1,
    pr_open_rate=80.0,
    pr_merge_delay=2.0,
    pr_merge_prob=0.8,
    comment_rate=0.1,
)

_SMALL_ISSUE_RATE = 5.0

SCENARIOS = ("stable", "bursty", "bug_influx", "departure", "feature_spike")


def scenario(name: str, days: int = 365, seed: int = 0) -> SimulationConfig:
    """Preset configurations.

    stable: the undisturbed baseline.
    bursty: three weeks of commits at 4/3 the baseline rate, then a silent week.
    bug_influx: 50 extra bug reports on day 50, relaxing over 14 days.
    departure: the most active 60% of contributors leave on day 100.
    feature_spike: 50 feature requests on day 50; they take three times as long to close.
    """
    key = name.replace("-", "_")
    if key not in SCENARIOS:
        raise UnknownScenario(f"unknown scenario {name!r}; expected one of {', '.join(SCENARIOS)}")
    base = replace(_BASELINE, days=days, seed=seed)
    if key == "bursty":
        return replace(base, commit_week_pattern=(4 / 3, 4 / 3, 4 / 3, 0.0))
    disturbance = {
        "bug_influx": DisturbanceSpec(DisturbanceKind.BUG_INFLUX, 50, 50),
        "departure": DisturbanceSpec(DisturbanceKind.CONTRIBUTOR_DEPARTURE, 100, 0.6),
        "feature_spike": DisturbanceSpec(DisturbanceKind.FEATURE_REQUEST_SPIKE, 50, 50),
    }.get(key)
    if disturbance is None:
        return base
    if disturbance.kind in _ISSUE_KINDS:
        # a smaller issue stream, so that the 50-issue mass is a real shock
        base = replace(base, issue_open_rate=_SMALL_ISSUE_RATE)
    if disturbance.at_day >= days:
        raise ValueError(f"scenario {name!r} needs more than {disturbance.at_day} days")
    return replace(base, disturbances=(disturbance,))


@dataclass(frozen=True)
class Equilibrium:
    """Stationary mean and standard deviation of each windowed metric, the
    expected normalised score of each component, and the expected CSI."""

    mean: dict[str, float]
    sd: dict[str, float]
    phi: dict[str, float]
    csi: float


def _normal_excess(m: float, s: float, k: float) -> float:
    """E[(X - k)+] for X ~ N(m, s^2)."""
    if s == 0:
        return max(m - k, 0.0)
    z = (m - k) / s
    pdf = math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    cdf = 0.5 * (1 + math.erf(z / math.sqrt(2)))
    return s * pdf + (m - k) * cdf


def expected_tent(m: float, s: float, mu: float, sigma: float) -> float:
    """E[normalize(X, mu, sigma)] for X ~ N(m, s^2), using the tent's
    decomposition into three ramps."""
    return (
        _normal_excess(m, s, mu - sigma)
        - 2 * _normal_excess(m, s, mu)
        + _normal_excess(m, s, mu + sigma)
    ) / sigma


def _sample_cv_moments(lam: float, n: int) -> tuple[float, float]:
    """Second-order delta-method mean and sd of the population CV of n iid Poisson(lam)."""
    m0, v0 = lam, lam * (n - 1) / n
    var_m = lam / n
    var_s2 = (lam + 3 * lam**2) / n - lam**2 * (n - 3) / (n * (n - 1))
    var_v = ((n - 1) / n) ** 2 * var_s2
    cov_mv = (n - 1) / n * lam / n
    r = math.sqrt(v0)
    g_m, g_v = -r / m0**2, 1 / (2 * r * m0)
    g_mm, g_vv, g_mv = 2 * r / m0**3, -1 / (4 * r**3 * m0), -1 / (2 * r * m0**2)
    mean = r / m0 + 0.5 * g_mm * var_m + 0.5 * g_vv * var_v + g_mv * cov_mv
    var = g_m**2 * var_m + g_v**2 * var_v + 2 * g_m * g_v * cov_mv
    return mean, math.sqrt(var)


def _dampened_fraction(
    finished: float, unfinished: float, mean_delay: float, scale: float
) -> tuple[float, float]:
    """Mean and sd of X/(X+Y) / (1 + T/scale) with X ~ Poisson(finished),
    Y ~ Poisson(unfinished) independent and T the mean of X Exp(mean_delay)."""
    total = finished + unfinished
    pi = finished / total
    g = 1 / (1 + mean_delay / scale)
    g1 = -(1 / scale) * g**2
    g2 = 2 / scale**2 * g**3
    mean = pi * g + 0.5 * g2 * mean_delay**2 / total
    var = pi * g1**2 * mean_delay**2 / total + g**2 * pi * (1 - pi) / total
    return mean, math.sqrt(var)


def equilibrium(config: SimulationConfig, stability) -> Equilibrium:
    """Analytic stationary behaviour of a disturbance-free run.

    Lifetimes are exponential and arrivals Poisson, so open items form an
    M/M/inf system: the backlog is Poisson(rate * delay), items finishing in a
    window are Poisson(rate * window) with Exp(delay) durations, and items still
    open at the window end are an independent Poisson(rate * delay). The
    windowed metrics are smooth functions of these counts and are expanded to
    second order; each normalised score is then averaged over a Gaussian with
    the resulting mean and sd.
    """
    if config.disturbances or set(config.commit_week_pattern) != {1.0}:
        raise ValueError("equilibrium is defined for undisturbed, unpatterned runs")
    w = float(math.floor(stability.window_days))
    if w != stability.window_days:
        raise ValueError("equilibrium needs a whole-day window")
    raw = stability.dampening_mode == "raw_days"
    mean, sd = {}, {}

    lam_c = config.commit_rate * config.contributors
    mean["cv_c"], sd["cv_c"] = _sample_cv_moments(lam_c, int(w))

    r_i, d_i = config.issue_open_rate, config.issue_close_delay
    mean["i"], sd["i"] = _dampened_fraction(
        r_i * w, r_i * d_i, d_i, 1.0 if raw else stability.tau_i_days
    )
    r_p, d_p, q = config.pr_open_rate, config.pr_merge_delay, config.pr_merge_prob
    mean["p"], sd["p"] = _dampened_fraction(
        q * r_p * w, r_p * d_p + (1 - q) * r_p * w, d_p, 1.0 if raw else stability.tau_p_days
    )

    # comments per window over the backlog at window start
    backlog = r_i * d_i + r_p * d_p
    cov = [r_i * d_i * math.exp(-t / d_i) + r_p * d_p * math.exp(-t / d_p) for t in range(int(w))]
    ratio_mean = w + (w * backlog - sum(cov)) / backlog**2
    spread = sum(
        cov[abs(j - k)] - cov[j] - cov[k] + cov[0] for j in range(int(w)) for k in range(int(w))
    )
    cr = config.comment_rate
    ratio_var = cr * w / backlog + cr**2 * spread / backlog**2

    weights = activity_weights(config)
    engaging = lam_c + r_p + cr * backlog
    p_active = 1 - np.exp(-engaging * weights / weights.sum() * w)
    total_users = config.contributors + config.reporters
    act_mean = float(p_active.sum()) / total_users
    act_var = float((p_active * (1 - p_active)).sum()) / total_users**2
    mean["active_ratio"], sd["active_ratio"] = act_mean, math.sqrt(act_var)
    mean["a"] = act_mean * cr * ratio_mean
    sd["a"] = math.sqrt(act_mean**2 * ratio_var + act_var * (cr * ratio_mean) ** 2)

    phi = {}
    for k, key in zip("cipa", ("cv_c", "i", "p", "a")):
        mu, sigma = stability.target(k)
        phi[k] = expected_tent(mean[key], sd[key], mu, sigma)
    csi = sum(stability.weight(k) * phi[k] for k in "cipa")
    return Equilibrium(mean, sd, phi, csi)
