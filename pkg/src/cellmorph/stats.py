"""Group aggregation and one-way ANOVA across experimental groups.

The F statistic is the classic between/within mean-square ratio,

    F = MS_between / MS_within,
    MS_between = sum_j n_j (mean_j - grand)^2 / (k - 1),
    MS_within  = sum_j sum_i (x_ij - mean_j)^2 / (N - k),

and the p-value comes from the F cumulative distribution evaluated through
the regularized incomplete beta function I_z(d1/2, d2/2) with
z = d1 x / (d1 x + d2), computed by Lentz's continued-fraction method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import ConvergenceError, StatsError

_BETACF_MAX_ITER = 200
_BETACF_EPS = 1e-15
_FPMIN = 1e-300


@dataclass(frozen=True)
class GroupStats:
    """Descriptive statistics of one feature within one group."""

    group: str
    feature: str
    n: int
    mean: float
    std: float  # n-1 denominator; defined as 0 for n = 1
    min: float
    max: float


@dataclass(frozen=True)
class AnovaResult:
    """One-way ANOVA of a feature across groups."""

    feature: str
    f_stat: float
    df_between: int
    df_within: int
    p_value: float
    group_means: tuple[float, ...]
    grand_mean: float


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n == 1:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def summarize_groups(
    records: Iterable[Mapping[str, object]],
    feature: str,
) -> list[GroupStats]:
    """Per-group n/mean/std/min/max of one feature of a record table.

    Records are mappings with a ``group`` key; records where the feature is
    missing or None are skipped.  Output is ordered by group name.
    """
    by_group: dict[str, list[float]] = {}
    seen_feature = False
    for record in records:
        if feature in record:
            seen_feature = True
            value = record[feature]
            if value is not None:
                by_group.setdefault(str(record["group"]), []).append(float(value))
    if not seen_feature:
        raise StatsError(f"unknown feature {feature!r}")
    out = []
    for group in sorted(by_group):
        values = by_group[group]
        mean, std = _mean_std(values)
        out.append(GroupStats(group=group, feature=feature, n=len(values),
                              mean=mean, std=std, min=min(values), max=max(values)))
    return out


def one_way_anova(groups: Sequence[Sequence[float]], feature: str = "") -> AnovaResult:
    """Classic one-way fixed-effects ANOVA (no Welch correction).

    Needs at least two groups with at least two samples each.  Degenerate
    variance cases follow the usual conventions: zero within-group scatter
    with non-zero separation gives F = inf, p = 0; all-identical data gives
    F = 0, p = 1.
    """
    k = len(groups)
    if k < 2:
        raise StatsError(f"ANOVA needs at least 2 groups, got {k}")
    sizes = [len(g) for g in groups]
    if any(n < 2 for n in sizes):
        raise StatsError(f"every group needs at least 2 samples, got sizes {sizes}")
    total_n = sum(sizes)
    grand = sum(sum(g) for g in groups) / total_n
    means = [sum(g) / len(g) for g in groups]
    ss_between = sum(n * (m - grand) ** 2 for n, m in zip(sizes, means))
    ss_within = sum(sum((x - m) ** 2 for x in g) for g, m in zip(groups, means))
    df_between = k - 1
    df_within = total_n - k
    ms_between = ss_between / df_between
    ms_within = ss_within / df_within
    if ms_within == 0.0:
        f_stat = 0.0 if ms_between == 0.0 else math.inf
        p_value = 1.0 if ms_between == 0.0 else 0.0
    else:
        f_stat = ms_between / ms_within
        p_value = 1.0 - f_cdf(f_stat, df_between, df_within)
    return AnovaResult(feature=feature, f_stat=f_stat, df_between=df_between,
                       df_within=df_within, p_value=p_value,
                       group_means=tuple(means), grand_mean=grand)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta, modified Lentz method."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ConvergenceError(
        f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) with the standard symmetry switch near the distribution mean."""
    if a <= 0 or b <= 0:
        raise StatsError(f"beta parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise StatsError(f"x must be within [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    front = math.exp(
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_cdf(x: float, d1: int, d2: int) -> float:
    """Cumulative distribution of the F(d1, d2) distribution at x >= 0."""
    if d1 < 1 or d2 < 1:
        raise StatsError(f"degrees of freedom must be >= 1, got ({d1}, {d2})")
    if x < 0:
        raise StatsError(f"F statistic must be non-negative, got {x}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    z = d1 * x / (d1 * x + d2)
    return regularized_incomplete_beta(d1 / 2.0, d2 / 2.0, z)
