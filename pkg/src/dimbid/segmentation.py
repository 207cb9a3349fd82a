"""Equal-volume grouping of raw feature values ranked by revenue signal."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import DimensionSpec, ImpressionLog
from .errors import GroupingError, NotReadyError

log = logging.getLogger(__name__)

RANK_METRICS = ("rpm", "conversion_count", "order_count")


@dataclass(frozen=True)
class GroupingRequest:
    dimension: str
    group_count: int
    rank_metric: str = "rpm"
    min_volume_threshold: int = 1000
    min_order_threshold: int = 10
    prefix_length: int | None = None

    def __post_init__(self):
        if self.group_count < 1:
            raise ValueError("group_count must be >= 1")
        if self.min_volume_threshold < 0 or self.min_order_threshold < 0:
            raise ValueError("thresholds must be non-negative")
        if self.rank_metric not in RANK_METRICS:
            raise ValueError(f"rank_metric must be one of {RANK_METRICS}")


@dataclass(frozen=True)
class ValueSummary:
    """Per raw value totals, sorted in group-assignment order."""

    values: tuple[str, ...]
    volume: np.ndarray
    revenue_micros: np.ndarray
    conversions: np.ndarray
    orders: np.ndarray

    def metric(self, name: str) -> np.ndarray:
        if name == "rpm":
            return self.revenue_micros / np.maximum(self.volume, 1) * 1e-3
        if name == "conversion_count":
            return self.conversions.astype(float)
        return self.orders.astype(float)


def summarize_values(records: ImpressionLog, dimension: str, prefix_length: int | None = None) -> ValueSummary:
    raw = records.feature_values(dimension).astype(str)
    if prefix_length is not None:
        raw = np.array([v[:prefix_length] for v in raw], dtype=str)
    values, inv = np.unique(raw, return_inverse=True)
    n = len(values)

    def total(x):
        out = np.zeros(n, dtype=np.int64)
        np.add.at(out, inv, x)
        return out

    return ValueSummary(
        values=tuple(str(v) for v in values),
        volume=np.bincount(inv, minlength=n).astype(np.int64),
        revenue_micros=total(records.revenue_micros),
        conversions=total(records.converted.astype(np.int64)),
        orders=total((records.revenue_micros > 0).astype(np.int64)),
    )


def rank_order(summary: ValueSummary, metric: str) -> np.ndarray:
    """Ascending metric; ties by volume descending, then raw value."""
    m = summary.metric(metric)
    keys = sorted(range(len(summary.values)),
                  key=lambda i: (m[i], -summary.volume[i], summary.values[i]))
    return np.array(keys, dtype=int)


def _sizes(cum, cuts):
    bounds = np.concatenate([[0], cuts, [len(cum) - 1]])
    return np.diff(cum[bounds])


def _score(cum, cuts):
    s = _sizes(cum, cuts)
    return s.max() - s.min(), float(((s - s.mean()) ** 2).sum())


def equal_volume_cuts(volumes: np.ndarray, group_count: int) -> np.ndarray:
    """Cut positions splitting an ordered volume sequence into contiguous groups.

    Boundaries start at the cumulative positions nearest to each multiple of
    total/group_count, then are shifted (singly or in consecutive blocks, one
    value at a time) while that narrows the spread between the largest and
    smallest group.  Every group keeps at least one value.
    """
    n = len(volumes)
    cum = np.concatenate([[0], np.cumsum(volumes)])
    if group_count == 1:
        return np.zeros(0, dtype=int)
    target = cum[-1] / group_count
    cuts = []
    prev = 0
    for i in range(1, group_count):
        j = int(np.argmin(np.abs(cum - i * target)))
        j = min(max(j, prev + 1), n - (group_count - i))
        cuts.append(j)
        prev = j
    cuts = np.array(cuts, dtype=int)

    best = _score(cum, cuts)
    m = len(cuts)
    improved = True
    while improved:
        improved = False
        for i in range(m):
            for j in range(i, m):
                for step in (-1, 1):
                    trial = cuts.copy()
                    trial[i:j + 1] += step
                    bounds = np.concatenate([[0], trial, [n]])
                    if np.any(np.diff(bounds) <= 0):
                        continue
                    s = _score(cum, trial)
                    if s < best:
                        best, cuts, improved = s, trial, True
    return cuts


def build_groups(records: ImpressionLog, request: GroupingRequest, force: bool = False) -> DimensionSpec:
    """Group the raw values of one dimension into equal-volume buckets.

    Values are ranked by ``request.rank_metric`` (lowest first) and assigned
    to groups 0..group_count-1 in that order.  Raises :class:`NotReadyError`
    while the log is below the activation thresholds unless ``force`` is set.
    """
    if len(records) == 0:
        raise NotReadyError("no impressions logged yet")
    summary = summarize_values(records, request.dimension, request.prefix_length)
    total_volume = int(summary.volume.sum())
    total_orders = int(summary.orders.sum())
    need_volume = request.min_volume_threshold * request.group_count
    if total_volume < need_volume or total_orders < request.min_order_threshold:
        msg = (f"{request.dimension}: {total_volume} impressions / {total_orders} orders, "
               f"need {need_volume} / {request.min_order_threshold}")
        if not force:
            raise NotReadyError(msg)
        log.warning("building groups below activation thresholds (%s)", msg)
    if len(summary.values) < request.group_count:
        raise GroupingError(
            f"{request.dimension}: only {len(summary.values)} distinct values for "
            f"{request.group_count} groups; use a smaller group_count")

    order = rank_order(summary, request.rank_metric)
    cuts = equal_volume_cuts(summary.volume[order], request.group_count)
    labels = np.searchsorted(cuts, np.arange(len(order)), side="right")
    group_of = {summary.values[v]: int(g) for v, g in zip(order, labels)}
    return DimensionSpec(request.dimension, group_of, request.group_count, request.prefix_length)


class SegmentSchedule:
    """Delays group creation until the campaign has enough data, then freezes it.

    On day ``d`` the groups are built from impressions of days ``0..d-1``.
    """

    def __init__(self, request: GroupingRequest, first_day: int = 7):
        self.request = request
        self.first_day = first_day
        self.spec: DimensionSpec | None = None
        self.built_on: int | None = None

    def update(self, records: ImpressionLog, day: int) -> DimensionSpec | None:
        if self.spec is not None:
            return self.spec
        if day < self.first_day:
            return None
        try:
            spec = build_groups(records.between(0, day - 1), self.request)
        except NotReadyError:
            return None
        self.spec, self.built_on = spec, day
        return spec


def rebuild_schedule(records: ImpressionLog, request: GroupingRequest, day: int,
                     schedule: SegmentSchedule | None = None) -> DimensionSpec | None:
    """Functional form of :class:`SegmentSchedule`; pass ``schedule`` to keep the freeze."""
    schedule = schedule or SegmentSchedule(request)
    return schedule.update(records, day)
