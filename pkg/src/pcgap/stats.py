"""Statistical procedures used for aggregation: Wilson score intervals,
Fisher's exact test, the Mann-Whitney U test, and distribution summaries.

Self-contained on purpose: normal quantiles come from Wichura's AS241
rational approximation (absolute error below 1e-9), tail probabilities from
erfc, and hypergeometric terms from lgamma.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations

import numpy as np

from .errors import DegenerateTable, EmptyInput, InvalidCount

__all__ = ["StatResult", "StatMethod", "wilson_ci", "fisher_exact",
           "mann_whitney_u", "summarize", "normal_quantile"]


class StatMethod(str, Enum):
    WILSON = "wilson"
    FISHER = "fisher"
    MANN_WHITNEY = "mann_whitney"
    SUMMARY = "summary"


@dataclass(frozen=True)
class StatResult:
    estimate: float
    ci_low: float | None = None
    ci_high: float | None = None
    p_value: float | None = None
    method: StatMethod = StatMethod.SUMMARY
    extras: dict = field(default_factory=dict)


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF (Wichura AS241, PPND16)."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0 else val


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def wilson_ci(successes: int, n: int, level: float = 0.95) -> StatResult:
    """Wilson score interval for a binomial proportion."""
    if n < 1 or not 0 <= successes <= n:
        raise InvalidCount(f"invalid counts: {successes}/{n}")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    z = normal_quantile(1.0 - (1.0 - level) / 2.0)
    p_hat = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p_hat + z2 / (2.0 * n)) / denom
    half = (z / denom) * math.sqrt(p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n))
    lo = 0.0 if successes == 0 else center - half
    hi = 1.0 if successes == n else center + half
    return StatResult(estimate=p_hat, ci_low=lo, ci_high=hi, method=StatMethod.WILSON)


def _log_hypergeom(k: int, r1: int, r2: int, c1: int) -> float:
    """log P(X = k) for the table (k, r1-k; c1-k, r2-c1+k) with fixed margins."""
    n = r1 + r2

    def lchoose(a, b):
        return math.lgamma(a + 1) - math.lgamma(b + 1) - math.lgamma(a - b + 1)

    return lchoose(r1, k) + lchoose(r2, c1 - k) - lchoose(n, c1)


def fisher_exact(a: int, b: int, c: int, d: int) -> StatResult:
    """Two-sided Fisher exact test with the probability-ordering convention:
    sum the probabilities of all margin-preserving tables whose point
    probability does not exceed the observed one (with 1e-12 relative slack).
    The estimate is the sample odds ratio ad/(bc)."""
    if min(a, b, c, d) < 0:
        raise InvalidCount("cells must be nonnegative")
    r1, r2, c1, c2 = a + b, c + d, a + c, b + d
    if min(r1, r2, c1, c2) == 0:
        raise DegenerateTable("a margin is zero")
    k_min = max(0, c1 - r2)
    k_max = min(r1, c1)
    log_obs = _log_hypergeom(a, r1, r2, c1)
    total = 0.0
    n_included = 0
    for k in range(k_min, k_max + 1):
        lp = _log_hypergeom(k, r1, r2, c1)
        if lp <= log_obs + 1e-12:
            total += math.exp(lp)
            n_included += 1
    # when the observed table is the most probable one, every table is in
    # the tail and the p-value is exactly 1 regardless of rounding
    if n_included == k_max - k_min + 1:
        p = 1.0
    else:
        p = min(total, 1.0)
    odds = math.inf if b * c == 0 else (a * d) / (b * c)
    return StatResult(estimate=odds, p_value=p, method=StatMethod.FISHER)


def _midranks(pooled: np.ndarray) -> np.ndarray:
    order = np.argsort(pooled, kind="mergesort")
    ranks = np.empty(len(pooled))
    sorted_vals = pooled[order]
    i = 0
    while i < len(pooled):
        j = i
        while j + 1 < len(pooled) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def mann_whitney_u(x, y) -> StatResult:
    """Two-sided Mann-Whitney U with midrank tie handling.

    Exact permutation enumeration when either sample has fewer than 8
    observations; otherwise a normal approximation with tie-corrected
    variance and continuity correction.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = len(x), len(y)
    if n < 1 or m < 1:
        raise EmptyInput("both samples must be nonempty")
    pooled = np.concatenate([x, y])
    ranks = _midranks(pooled)
    u_obs = float(ranks[:n].sum() - n * (n + 1) / 2.0)
    center = n * m / 2.0
    if min(n, m) < 8:
        dev_obs = abs(u_obs - center)
        count = 0
        total = 0
        for idx in combinations(range(n + m), n):
            u = ranks[list(idx)].sum() - n * (n + 1) / 2.0
            if abs(u - center) >= dev_obs - 1e-12:
                count += 1
            total += 1
        p = count / total
    else:
        nm = n + m
        _, tie_counts = np.unique(pooled, return_counts=True)
        tie_term = float(((tie_counts ** 3 - tie_counts).sum())) / (nm * (nm - 1))
        var = n * m / 12.0 * ((nm + 1) - tie_term)
        if var <= 0:
            p = 1.0
        else:
            z = (abs(u_obs - center) - 0.5) / math.sqrt(var)
            z = max(z, 0.0)
            p = min(2.0 * _normal_sf(z), 1.0)
    p = max(p, 5e-324)
    return StatResult(estimate=u_obs, p_value=p, method=StatMethod.MANN_WHITNEY)


def summarize(values, thresholds=()) -> StatResult:
    """Median/IQR-centric summary with linear-interpolation (type-7) quartiles
    plus mean, std, min, max, and threshold-exceedance fractions."""
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise EmptyInput("cannot summarize an empty vector")
    q1, med, q3 = np.percentile(vals, [25.0, 50.0, 75.0])
    extras = {
        "mean": float(vals.mean()),
        "median": float(med),
        "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
        "iqr_low": float(q1),
        "iqr_high": float(q3),
        "min": float(vals.min()),
        "max": float(vals.max()),
    }
    for thr in thresholds:
        extras[f"frac_gt_{thr}"] = float((vals > thr).mean())
    return StatResult(estimate=float(med), ci_low=float(q1), ci_high=float(q3),
                      method=StatMethod.SUMMARY, extras=extras)
