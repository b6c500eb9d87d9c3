"""Two-proportion score test and a self-contained standard normal CDF.

The test statistic for samples (x1, n1) and (x2, n2) is

    z = (p1 - p2) / sqrt(p * (1 - p) * (1/n1 + 1/n2))

with p1 = x1/n1, p2 = x2/n2 and pooled p = (x1 + x2)/(n1 + n2). For large
n1 and n2, z is approximately standard normal, so the two-sided p-value is
2 * (1 - Phi(|z|)).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

from .errors import DataError

_SQRT_PI = math.sqrt(math.pi)
_SQRT_2 = math.sqrt(2.0)
# crossover between the erf power series and the erfc continued fraction
_ERF_SERIES_CUTOFF = 2.0


class DegeneratePool(DataError):
    """Pooled proportion is 0 or 1: zero variance, the statistic is undefined."""


@dataclass(frozen=True)
class ProportionSample:
    """Success count out of a number of trials."""

    successes: int
    trials: int

    def __post_init__(self):
        if self.trials < 1:
            raise DataError("trials must be >= 1")
        if not (0 <= self.successes <= self.trials):
            raise DataError(
                f"successes ({self.successes}) outside [0, trials={self.trials}]"
            )

    @property
    def proportion(self) -> float:
        return self.successes / self.trials


@dataclass(frozen=True)
class ScoreTestResult:
    z: float
    p_two_sided: float
    pooled_p: float
    sample1: ProportionSample
    sample2: ProportionSample


def _erf_series(x: float) -> float:
    """erf via the scaled power series; stable (all terms positive) for small x."""
    # erf(x) = (2/sqrt(pi)) * exp(-x^2) * sum_{n>=0} x^(2n+1) * 2^n / (1*3*...*(2n+1))
    term = x
    total = x
    two_x2 = 2.0 * x * x
    n = 0
    while True:
        n += 1
        term *= two_x2 / (2 * n + 1)
        new_total = total + term
        if new_total == total:
            break
        total = new_total
        if n > 200:
            break
    return (2.0 / _SQRT_PI) * math.exp(-x * x) * total


def _erfc_continued_fraction(x: float) -> float:
    """erfc for x >= cutoff via the Laplace continued fraction (modified Lentz)."""
    # erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    tiny = 1e-300
    f = x if x != 0.0 else tiny
    c = f
    d = 0.0
    for n in range(1, 300):
        a = n / 2.0
        d = x + a * d
        if d == 0.0:
            d = tiny
        c = x + a / c
        if c == 0.0:
            c = tiny
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return math.exp(-x * x) / _SQRT_PI / f


def erfc(x: float) -> float:
    """Complementary error function, accurate to ~1e-15 over the real line."""
    if math.isnan(x):
        raise DataError("erfc: input is NaN")
    if x < 0.0:
        return 2.0 - erfc(-x)
    if x < _ERF_SERIES_CUTOFF:
        return 1.0 - _erf_series(x)
    if x > 30.0:
        return 0.0  # below double-precision underflow of exp(-x^2)
    return _erfc_continued_fraction(x)


def erf(x: float) -> float:
    return 1.0 - erfc(x)


def normal_cdf(z: float) -> float:
    """Standard normal CDF Phi(z); raises on non-finite input."""
    if not math.isfinite(z):
        raise DataError(f"normal_cdf: non-finite input {z!r}")
    return 0.5 * erfc(-z / _SQRT_2)


def two_sided_p(z: float) -> float:
    """Two-sided p-value 2*(1 - Phi(|z|)), clamped to [0, 1]."""
    if not math.isfinite(z):
        raise DataError(f"two_sided_p: non-finite input {z!r}")
    p = 2.0 * (1.0 - normal_cdf(abs(z)))
    return min(1.0, max(0.0, p))


def score_test(s1: ProportionSample, s2: ProportionSample) -> ScoreTestResult:
    """Pooled-variance two-proportion score test of H0: p1 == p2."""
    pooled = (s1.successes + s2.successes) / (s1.trials + s2.trials)
    if pooled <= 0.0 or pooled >= 1.0:
        raise DegeneratePool(
            f"pooled proportion {pooled} has zero variance; test undefined"
        )
    variance = pooled * (1.0 - pooled) * (1.0 / s1.trials + 1.0 / s2.trials)
    z = (s1.proportion - s2.proportion) / math.sqrt(variance)
    return ScoreTestResult(
        z=z,
        p_two_sided=two_sided_p(z),
        pooled_p=pooled,
        sample1=s1,
        sample2=s2,
    )


def score_result_to_csv(result: ScoreTestResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["z", "p_two_sided", "pooled_p", "n1", "x1", "n2", "x2"])
    writer.writerow(
        [
            repr(result.z),
            repr(result.p_two_sided),
            repr(result.pooled_p),
            result.sample1.trials,
            result.sample1.successes,
            result.sample2.trials,
            result.sample2.successes,
        ]
    )
    return buf.getvalue()


def score_result_to_json(result: ScoreTestResult) -> str:
    return json.dumps(
        {
            "z": result.z,
            "p_two_sided": result.p_two_sided,
            "pooled_p": result.pooled_p,
            "n1": result.sample1.trials,
            "x1": result.sample1.successes,
            "n2": result.sample2.trials,
            "x2": result.sample2.successes,
        },
        sort_keys=True,
    )
