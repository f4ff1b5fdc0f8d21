"""Likelihood metrics comparing actual counts to baseline estimates.

Scores are computed in log space so that regions with very large aggregate
counts never overflow; the raw score is recovered by exponentiation and may
saturate to ``inf`` (flagged by the caller via the log score, which is always
finite for positive baselines).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, ContractError

BOUND_MODES = ("mean", "upper", "lower")
METRICS = ("ebp", "asym")

MIN_NULL_SAMPLES = 20


def _validate(baseline, count):
    baseline = np.asarray(baseline, dtype=np.float64)
    count = np.asarray(count, dtype=np.float64)
    if np.any(count < 0):
        raise ContractError("negative count passed to scan metric")
    if np.any(baseline < 0):
        raise ContractError("negative baseline passed to scan metric")
    return baseline, count


def _log_ratio(baseline, count):
    """log of (C/B)^C * exp(B - C), the likelihood ratio at q* = C/B.

    Defined as 0 where C == 0 (the C*log(C) limit) and where B == 0 with
    C == 0 (an empty region carries no evidence).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        log_q = np.where(count > 0, np.log(count) - np.log(baseline), 0.0)
    return count * log_q + baseline - count


def ebp_log_score(baseline, count):
    """Log of the expectation-based Poisson likelihood ratio.

    Zero (score 1) whenever the actual count does not exceed the baseline.
    """
    baseline, count = _validate(baseline, count)
    return np.where(count > baseline, _log_ratio(baseline, count), 0.0)


def ebp_score(baseline, count):
    """Expectation-based Poisson likelihood ratio.

    Args:
        baseline: Sum of baseline estimates over a space-time region.
        count: Sum of actual counts over the same region.
    Returns:
        The likelihood ratio, 1 when the region is no busier than expected.
        May saturate to ``inf`` for extreme counts; use ``ebp_log_score``
        when that matters.
    """
    return np.exp(ebp_log_score(baseline, count))


def asym_score(baseline, count):
    """Signed variant of the EBP ratio, negative for quieter-than-expected.

    Busier regions score ``ebp_score - 1``; quieter regions score
    ``1 - (C/B)^C e^(B-C)`` evaluated at the unconstrained maximiser
    q* = C/B < 1, so the score is exactly 0 at C == B and its sign always
    matches sign(C - B). Empty regions (B == C == 0) score 0.
    """
    baseline, count = _validate(baseline, count)
    log_ratio = _log_ratio(baseline, count)
    with np.errstate(over="ignore"):
        busy = np.exp(np.where(count >= baseline, log_ratio, 0.0)) - 1.0
        quiet = 1.0 - np.exp(np.where(count < baseline, log_ratio, 0.0))
    return np.where(count >= baseline, busy, quiet)


@dataclass(frozen=True)
class RegionAggregates:
    """Summed baselines and counts for one space-time region."""

    baseline: float
    count: float
    baseline_upper: float
    baseline_lower: float

    def __post_init__(self):
        if not (0.0 <= self.baseline_lower <= self.baseline <= self.baseline_upper):
            raise ValueError("aggregates must satisfy lower <= mean <= upper >= 0")
        if self.count < 0:
            raise ValueError("negative aggregate count")
        for value in (self.baseline, self.count, self.baseline_upper, self.baseline_lower):
            if not np.isfinite(value):
                raise ValueError("aggregates must be finite")

    def baseline_for(self, bound_mode: str) -> float:
        if bound_mode == "mean":
            return self.baseline
        if bound_mode == "upper":
            return self.baseline_upper
        if bound_mode == "lower":
            return self.baseline_lower
        raise ValueError(f"unknown bound mode {bound_mode!r}")


def region_score(agg: RegionAggregates, metric: str = "ebp", bound_mode: str = "mean") -> float:
    """Score one region's aggregates with the selected metric and baseline bound."""
    baseline = agg.baseline_for(bound_mode)
    if baseline <= 0 and agg.count > 0:
        raise ContractError("non-positive baseline with positive count in region_score")
    if metric == "ebp":
        return float(ebp_score(baseline, agg.count))
    if metric == "asym":
        return float(asym_score(baseline, agg.count))
    raise ValueError(f"unknown metric {metric!r}")


def nearest_rank(sample, percentile: float) -> float:
    """Nearest-rank percentile: sorted[min(floor(p*n/100), n-1)].

    Exact on small calibration sets; percentile 100 returns the maximum,
    and the 90th percentile of {1..100} is 91.
    """
    values = np.sort(np.asarray(sample, dtype=np.float64))
    if values.size == 0:
        raise ValueError("empty sample")
    if not 0 < percentile <= 100:
        raise ValueError("percentile must be in (0, 100]")
    idx = min(int(np.floor(percentile * values.size / 100.0)), values.size - 1)
    return float(values[idx])


@dataclass(frozen=True)
class NullDistribution:
    """Empirical sample of daily maximum scores on surge-free data."""

    scan_type: str
    metric: str
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("null samples must be 1-d")
        if not np.all(np.isfinite(samples)):
            raise ValueError("null samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def count(self) -> int:
        return int(self.samples.size)

    def threshold(self, percentile: float = 99.0) -> float:
        """Alarm level at the given percentile of the null sample."""
        if self.count < MIN_NULL_SAMPLES:
            raise CalibrationError(
                f"null distribution has {self.count} samples; "
                f"at least {MIN_NULL_SAMPLES} required"
            )
        return nearest_rank(self.samples, percentile)


def corrected_score(raw: float, null: NullDistribution, percentile: float = 99.0) -> float:
    """How far a raw score exceeds the calibrated alarm level (positive = alarm)."""
    return float(raw) - null.threshold(percentile)
