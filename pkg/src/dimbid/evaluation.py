"""Quality scores for dimensions and groupings.

All logarithms are natural logs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import DimensionSpec, ImpressionLog, accumulative_rpm_series
from .errors import DataError

DEFAULT_EPSILON = 0.5


@dataclass(frozen=True)
class DistanceConfig:
    lam: float = 1.0
    horizon: int = 30

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 1:
        raise DataError(f"series must be 1-D of equal non-zero length, got {a.shape} and {b.shape}")
    return a, b


def crossover_ratio(a, b) -> float:
    """(days a > b, plus one) over (days a <= b, plus one)."""
    a, b = _pair(a, b)
    above = int(np.sum(a > b))
    return (above + 1) / (len(a) - above + 1)


def pairwise_distance(a, b, config: DistanceConfig | None = None) -> float:
    a, b = _pair(a, b)
    config = config or DistanceConfig(horizon=len(a))
    r = crossover_ratio(a, b)
    return abs(float(np.sum(a - b))) + config.lam * max(r, 1 / r) / len(a)


@dataclass(frozen=True)
class Separation:
    median: float
    mean: float
    distances: dict


def dimension_separation(records: ImpressionLog, spec: DimensionSpec, config: DistanceConfig) -> Separation:
    """Median and mean pairwise distance between the groups' accumulative RPM curves."""
    if spec.group_count < 2:
        raise DataError("need at least 2 groups to measure separation")
    series = [accumulative_rpm_series(records, spec, g, config.horizon).values
              for g in range(spec.group_count)]
    dist = {(i, j): pairwise_distance(series[i], series[j], config)
            for i, j in itertools.combinations(range(spec.group_count), 2)}
    vals = np.array(list(dist.values()))
    return Separation(float(np.median(vals)), float(vals.mean()), dist)


@dataclass(frozen=True)
class GroupShareTable:
    """Conversion and impression shares per group.

    Built from counts with ``epsilon`` added to every cell; ``epsilon=0``
    keeps raw shares (strict mode).
    """

    conversion_share: np.ndarray
    impression_share: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    @classmethod
    def from_counts(cls, conversions, impressions, epsilon: float = DEFAULT_EPSILON) -> GroupShareTable:
        c = np.asarray(conversions, dtype=float) + epsilon
        n = np.asarray(impressions, dtype=float) + epsilon
        if c.shape != n.shape or c.ndim != 1:
            raise DataError("conversion and impression counts must be 1-D of equal length")
        if c.sum() <= 0 or n.sum() <= 0:
            raise DataError("no conversions or no impressions to share out")
        return cls(c / c.sum(), n / n.sum(), epsilon)

    @classmethod
    def from_log(cls, records: ImpressionLog, spec: DimensionSpec, epsilon: float = DEFAULT_EPSILON) -> GroupShareTable:
        codes = records.group_codes(spec)
        conv = np.bincount(codes, weights=records.converted.astype(float), minlength=spec.group_count + 1)
        imp = np.bincount(codes, minlength=spec.group_count + 1)
        # overflow rows are left out of the shares
        return cls.from_counts(conv[:-1], imp[:-1], epsilon)

    def _checked(self):
        p = np.asarray(self.conversion_share, dtype=float)
        q = np.asarray(self.impression_share, dtype=float)
        if np.any(p <= 0) or np.any(q <= 0):
            raise DataError("zero share; enable smoothing (epsilon > 0)")
        return p, q


def modified_woe(table: GroupShareTable) -> np.ndarray:
    """Per-group log(conversion share / impression share) x 100."""
    p, q = table._checked()
    return np.log(p / q) * 100.0


def information_value(table: GroupShareTable) -> float:
    p, q = table._checked()
    return float(np.sum((p - q) * np.log(p / q)))


def mutual_information(joint_counts, epsilon: float = 0.0) -> float:
    """Mutual information between a group pair and the conversion flag.

    ``joint_counts`` has shape (I, J, 2).  Empty cells contribute nothing.
    """
    n = np.asarray(joint_counts, dtype=float)
    if n.ndim != 3 or n.shape[2] != 2:
        raise DataError(f"expected an I x J x 2 table, got shape {n.shape}")
    if np.any(n < 0):
        raise DataError("negative counts")
    n = n + epsilon
    total = n.sum()
    if total <= 0:
        raise DataError("empty contingency table")
    p = n / total
    p_pair = p.sum(axis=2, keepdims=True)
    p_y = p.sum(axis=(0, 1), keepdims=True)
    nz = p > 0
    ratio = np.where(nz, p / np.where(nz, p_pair * p_y, 1.0), 1.0)
    return float(np.sum(np.where(nz, p * np.log(ratio), 0.0)))


def joint_counts(records: ImpressionLog, spec_a: DimensionSpec, spec_b: DimensionSpec) -> np.ndarray:
    """(group of a, group of b, converted) counts, overflow groups included."""
    ga = records.group_codes(spec_a)
    gb = records.group_codes(spec_b)
    ia, ib = spec_a.group_count + 1, spec_b.group_count + 1
    flat = (ga * ib + gb) * 2 + records.converted.astype(np.int64)
    return np.bincount(flat, minlength=ia * ib * 2).reshape(ia, ib, 2)


def entropy(counts) -> float:
    p = np.asarray(counts, dtype=float)
    p = p[p > 0] / p.sum()
    return float(-np.sum(p * np.log(p)))
