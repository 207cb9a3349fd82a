"""Domain data model, impression-log ingestion and segment aggregation.

Currency is carried as integer micro-units (1e-6 of a currency unit) in every
log structure so that aggregation is exact.  Floating point only appears in
derived quantities such as CPM and RPM.

Logs are stored column-wise in :class:`ImpressionLog`; it behaves like a
read-only sequence of :class:`ImpressionRecord` but keeps numpy arrays
underneath so that simulator-scale logs stay cheap to slice and aggregate.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DataError, LogFormatError

MICROS = 1_000_000

# Non-feature columns of the log CSV.  ``attributed_day`` is optional.
CORE_COLUMNS = ("day", "impression_id", "cost_micros", "revenue_micros", "converted")
OPTIONAL_COLUMNS = ("attributed_day",)
DEFAULT_FEATURES = ("zip", "site", "device", "hour")


def derive_seed(seed: int, *stage) -> int:
    """Stable 63-bit seed for a named stage, independent of PYTHONHASHSEED."""
    text = "/".join(str(x) for x in (seed,) + stage)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big") >> 1


def to_micros(amount: float) -> int:
    return int(round(amount * MICROS))


def from_micros(micros) -> float:
    return micros / MICROS


@dataclass(frozen=True)
class ImpressionRecord:
    """One won auction.

    ``attributed_day`` is the day the conversion was credited, ``None`` when
    there is no conversion or the log does not carry that column.
    """

    day: int
    impression_id: str
    features: Mapping[str, str]
    cost_micros: int
    revenue_micros: int = 0
    converted: bool = False
    attributed_day: int | None = None

    def __post_init__(self):
        if self.day < 0:
            raise DataError(f"day must be >= 0, got {self.day}")
        if self.cost_micros < 0:
            raise DataError("cost must be non-negative")
        if self.revenue_micros < 0:
            raise DataError("attributed revenue must be non-negative")
        if not self.converted and self.revenue_micros != 0:
            raise DataError("unconverted impression cannot carry revenue")
        object.__setattr__(self, "features", dict(self.features))

    @property
    def cost(self) -> float:
        return from_micros(self.cost_micros)

    @property
    def attributed_revenue(self) -> float:
        return from_micros(self.revenue_micros)


@dataclass(frozen=True)
class CampaignConfig:
    budget_per_period: float
    flight_days: int
    base_bid: float
    attribution_window_days: int = 30
    adjustment_cadence_days: int = 2
    factor_bounds: tuple[float, float] = (0.2, 5.0)

    def __post_init__(self):
        lo, hi = self.factor_bounds
        if self.budget_per_period <= 0:
            raise ValueError("budget_per_period must be positive")
        if self.flight_days < 1:
            raise ValueError("flight_days must be >= 1")
        if self.base_bid <= 0:
            raise ValueError("base_bid must be positive")
        if self.attribution_window_days < 1 or self.adjustment_cadence_days < 1:
            raise ValueError("attribution window and cadence must be >= 1 day")
        if not 0 < lo <= 1 <= hi:
            raise ValueError(f"factor bounds must satisfy 0 < lo <= 1 <= hi, got {self.factor_bounds}")

    @property
    def daily_budget(self) -> float:
        return self.budget_per_period / self.adjustment_cadence_days

    @property
    def periods(self) -> int:
        return math.ceil(self.flight_days / self.adjustment_cadence_days)

    @property
    def total_budget(self) -> float:
        return self.budget_per_period * self.periods


@dataclass(frozen=True, eq=False)
class DimensionSpec:
    """Mapping of raw feature values to groups for one dimension.

    Values not present in ``group_of`` land in the overflow group, whose index
    is ``group_count`` and whose bid factor is always 1.  With
    ``prefix_length`` set, raw values are truncated before lookup (zip
    prefixes).
    """

    name: str
    group_of: Mapping[str, int]
    group_count: int
    prefix_length: int | None = None

    def __post_init__(self):
        mapping = {str(k): int(v) for k, v in self.group_of.items()}
        if self.group_count < 1:
            raise DataError("a dimension needs at least one group")
        used = set(mapping.values())
        if used != set(range(self.group_count)):
            missing = sorted(set(range(self.group_count)) - used)
            extra = sorted(used - set(range(self.group_count)))
            raise DataError(f"dimension {self.name!r}: empty groups {missing}, out-of-range groups {extra}")
        object.__setattr__(self, "group_of", mapping)

    def __eq__(self, other):
        if not isinstance(other, DimensionSpec):
            return NotImplemented
        return (self.name, dict(self.group_of), self.group_count, self.prefix_length) == (
            other.name, dict(other.group_of), other.group_count, other.prefix_length)

    __hash__ = None

    @property
    def overflow_group(self) -> int:
        return self.group_count

    def key(self, value: str) -> str:
        value = str(value)
        if self.prefix_length is not None:
            return value[: self.prefix_length]
        return value

    def group_index(self, value: str, strict: bool = False) -> int:
        g = self.group_of.get(self.key(value))
        if g is None:
            if strict:
                raise DataError(f"dimension {self.name!r}: unmapped value {value!r}")
            return self.overflow_group
        return g

    def members(self, group: int) -> list[str]:
        return sorted(v for v, g in self.group_of.items() if g == group)


@dataclass(frozen=True)
class SegmentStats:
    volume: int = 0
    spend_micros: int = 0
    revenue_micros: int = 0
    conversions: int = 0

    @property
    def spend(self) -> float:
        return from_micros(self.spend_micros)

    @property
    def revenue(self) -> float:
        return from_micros(self.revenue_micros)

    @property
    def defined(self) -> bool:
        """False for empty groups, whose CPM and RPM are undefined."""
        return self.volume > 0

    @property
    def cpm(self) -> float | None:
        if not self.volume:
            return None
        return self.spend / self.volume * 1000.0

    @property
    def rpm(self) -> float | None:
        if not self.volume:
            return None
        return self.revenue / self.volume * 1000.0

    def __add__(self, other: SegmentStats) -> SegmentStats:
        return SegmentStats(
            self.volume + other.volume,
            self.spend_micros + other.spend_micros,
            self.revenue_micros + other.revenue_micros,
            self.conversions + other.conversions,
        )


@dataclass(frozen=True)
class GroupStats:
    """Per-group aggregates of one dimension, plus the overflow bucket."""

    dimension: str
    groups: tuple[SegmentStats, ...]
    overflow: SegmentStats = SegmentStats()

    def __len__(self):
        return len(self.groups)

    def __getitem__(self, i):
        return self.groups[i]

    def __iter__(self):
        return iter(self.groups)

    def total(self) -> SegmentStats:
        out = self.overflow
        for s in self.groups:
            out = out + s
        return out


@dataclass(frozen=True, eq=False)
class BidPlan:
    """Base bid plus one factor per group of every dimension.

    The plan also carries the dimension definitions it applies to, since a DSP
    line item needs both.  Overflow groups always bid with factor 1.
    """

    base_bid: float
    factors: tuple[tuple[float, ...], ...] = ()
    dimensions: tuple[DimensionSpec, ...] = ()

    def __post_init__(self):
        factors = tuple(tuple(float(x) for x in row) for row in self.factors)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        if self.dimensions and len(self.dimensions) != len(factors):
            raise DataError("plan needs one factor row per dimension")
        for spec, row in zip(self.dimensions, factors):
            if len(row) != spec.group_count:
                raise DataError(f"dimension {spec.name!r}: {len(row)} factors for {spec.group_count} groups")
        if any(x <= 0 for row in factors for x in row):
            raise DataError("bid factors must be positive")

    def __eq__(self, other):
        if not isinstance(other, BidPlan):
            return NotImplemented
        return (self.base_bid, self.factors, self.dimensions) == (other.base_bid, other.factors, other.dimensions)

    __hash__ = None

    @classmethod
    def uniform(cls, base_bid: float, dimensions: Sequence[DimensionSpec] = (), factor: float = 1.0) -> BidPlan:
        return cls(base_bid, tuple((factor,) * d.group_count for d in dimensions), tuple(dimensions))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(row) for row in self.factors)

    def flat_factors(self) -> np.ndarray:
        return np.concatenate([np.asarray(r) for r in self.factors]) if self.factors else np.empty(0)

    def within(self, bounds: tuple[float, float], tol: float = 1e-12) -> bool:
        lo, hi = bounds
        return all(lo - tol <= x <= hi + tol for row in self.factors for x in row)

    def clamped(self, bounds: tuple[float, float]) -> BidPlan:
        lo, hi = bounds
        rows = tuple(tuple(min(max(x, lo), hi) for x in row) for row in self.factors)
        return BidPlan(self.base_bid, rows, self.dimensions)

    def factor_table(self, k: int) -> np.ndarray:
        """Factors of dimension ``k`` with the overflow factor 1 appended."""
        return np.append(np.asarray(self.factors[k], dtype=float), 1.0)


@dataclass(frozen=True)
class FeatureColumn:
    """Dictionary-encoded categorical column."""

    codes: np.ndarray
    categories: tuple[str, ...]

    @classmethod
    def from_values(cls, values) -> FeatureColumn:
        arr = np.asarray([str(v) for v in values], dtype=object)
        if len(arr) == 0:
            return cls(np.zeros(0, dtype=np.int32), ())
        cats, codes = np.unique(arr.astype(str), return_inverse=True)
        return cls(codes.astype(np.int32), tuple(str(c) for c in cats))

    def values(self) -> np.ndarray:
        cats = np.asarray(self.categories, dtype=object)
        return cats[self.codes] if len(self.codes) else np.empty(0, dtype=object)

    def take(self, index) -> FeatureColumn:
        return FeatureColumn(self.codes[index], self.categories)


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ImpressionLog(Sequence):
    """Column-oriented, immutable impression log.

    Indexing with an integer yields an :class:`ImpressionRecord`; ``attributed_day``
    is -1 where unknown or unconverted.
    """

    day: np.ndarray
    impression_id: np.ndarray
    features: Mapping[str, FeatureColumn]
    cost_micros: np.ndarray
    revenue_micros: np.ndarray
    converted: np.ndarray
    attributed_day: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.day)
        object.__setattr__(self, "day", _frozen(self.day, np.int64))
        object.__setattr__(self, "impression_id", np.asarray(self.impression_id))
        object.__setattr__(self, "cost_micros", _frozen(self.cost_micros, np.int64))
        object.__setattr__(self, "revenue_micros", _frozen(self.revenue_micros, np.int64))
        object.__setattr__(self, "converted", _frozen(self.converted, bool))
        if self.attributed_day is not None:
            object.__setattr__(self, "attributed_day", _frozen(self.attributed_day, np.int64))
        object.__setattr__(self, "features", dict(self.features))
        cols = [self.impression_id, self.cost_micros, self.revenue_micros, self.converted]
        cols += [c.codes for c in self.features.values()]
        if self.attributed_day is not None:
            cols.append(self.attributed_day)
        if any(len(c) != n for c in cols):
            raise DataError("log columns have different lengths")

    @classmethod
    def empty(cls, dimensions: Iterable[str] = DEFAULT_FEATURES) -> ImpressionLog:
        z = np.zeros(0, dtype=np.int64)
        feats = {d: FeatureColumn(np.zeros(0, dtype=np.int32), ()) for d in dimensions}
        return cls(z, np.zeros(0, dtype=object), feats, z, z, np.zeros(0, bool))

    @classmethod
    def from_records(cls, records: Iterable[ImpressionRecord], dimensions: Sequence[str] | None = None) -> ImpressionLog:
        records = list(records)
        if dimensions is None:
            names: list[str] = []
            for r in records:
                names.extend(k for k in r.features if k not in names)
            dimensions = names
        feats = {d: FeatureColumn.from_values([r.features.get(d, "") for r in records]) for d in dimensions}
        has_attr = any(r.attributed_day is not None for r in records)
        return cls(
            day=np.array([r.day for r in records], dtype=np.int64),
            impression_id=np.array([r.impression_id for r in records], dtype=object),
            features=feats,
            cost_micros=np.array([r.cost_micros for r in records], dtype=np.int64),
            revenue_micros=np.array([r.revenue_micros for r in records], dtype=np.int64),
            converted=np.array([r.converted for r in records], dtype=bool),
            attributed_day=np.array([-1 if r.attributed_day is None else r.attributed_day for r in records],
                                    dtype=np.int64) if has_attr else None,
        )

    def __len__(self):
        return len(self.day)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return self.take(np.arange(len(self))[i])
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        ad = None
        if self.attributed_day is not None and self.attributed_day[i] >= 0:
            ad = int(self.attributed_day[i])
        return ImpressionRecord(
            day=int(self.day[i]),
            impression_id=str(self.impression_id[i]),
            features={k: c.categories[c.codes[i]] for k, c in self.features.items()},
            cost_micros=int(self.cost_micros[i]),
            revenue_micros=int(self.revenue_micros[i]),
            converted=bool(self.converted[i]),
            attributed_day=ad,
        )

    def __iter__(self) -> Iterator[ImpressionRecord]:
        for i in range(len(self)):
            yield self[i]

    @property
    def dimensions(self) -> tuple[str, ...]:
        return tuple(self.features)

    @property
    def last_day(self) -> int:
        return int(self.day.max()) if len(self) else -1

    def take(self, index) -> ImpressionLog:
        return ImpressionLog(
            day=self.day[index],
            impression_id=self.impression_id[index],
            features={k: c.take(index) for k, c in self.features.items()},
            cost_micros=self.cost_micros[index],
            revenue_micros=self.revenue_micros[index],
            converted=self.converted[index],
            attributed_day=None if self.attributed_day is None else self.attributed_day[index],
        )

    def between(self, first_day: int, last_day: int) -> ImpressionLog:
        return self.take(np.flatnonzero((self.day >= first_day) & (self.day <= last_day)))

    def as_of(self, day: int) -> ImpressionLog:
        """The log as seen at the end of ``day``: later impressions dropped,
        revenue credited after ``day`` hidden."""
        if self.attributed_day is None:
            return self.between(0, day)
        sub = self.between(0, day)
        seen = sub.converted & (sub.attributed_day <= day)
        return ImpressionLog(
            day=sub.day,
            impression_id=sub.impression_id,
            features=sub.features,
            cost_micros=sub.cost_micros,
            revenue_micros=np.where(seen, sub.revenue_micros, 0),
            converted=seen,
            attributed_day=np.where(seen, sub.attributed_day, -1),
        )

    def feature_values(self, name: str) -> np.ndarray:
        if name not in self.features:
            raise DataError(f"log has no dimension column {name!r}")
        return self.features[name].values()

    def group_codes(self, spec: DimensionSpec, strict: bool = False) -> np.ndarray:
        """Group index of every row; unmapped values go to the overflow group."""
        col = self.features.get(spec.name)
        if col is None:
            raise DataError(f"log has no dimension column {spec.name!r}")
        table = np.array([spec.group_of.get(spec.key(c), -1) for c in col.categories], dtype=np.int64)
        if len(self) == 0:
            return np.zeros(0, dtype=np.int64)
        codes = table[col.codes]
        unmapped = codes < 0
        if unmapped.any():
            if strict:
                bad = col.categories[col.codes[np.flatnonzero(unmapped)[0]]]
                raise DataError(f"dimension {spec.name!r}: unmapped value {bad!r}")
            codes = np.where(unmapped, spec.overflow_group, codes)
        return codes

    @staticmethod
    def concat(logs: Sequence[ImpressionLog]) -> ImpressionLog:
        logs = [lg for lg in logs if lg is not None]
        if not logs:
            return ImpressionLog.empty(())
        names = logs[0].dimensions
        feats = {}
        for name in names:
            cats = sorted(set().union(*(lg.features[name].categories for lg in logs)))
            lookup = {c: i for i, c in enumerate(cats)}
            parts = []
            for lg in logs:
                col = lg.features[name]
                remap = np.array([lookup[c] for c in col.categories], dtype=np.int32)
                parts.append(remap[col.codes] if len(col.codes) else np.zeros(0, np.int32))
            feats[name] = FeatureColumn(np.concatenate(parts).astype(np.int32), tuple(cats))
        with_attr = any(lg.attributed_day is not None for lg in logs)
        return ImpressionLog(
            day=np.concatenate([lg.day for lg in logs]),
            impression_id=np.concatenate([lg.impression_id for lg in logs]),
            features=feats,
            cost_micros=np.concatenate([lg.cost_micros for lg in logs]),
            revenue_micros=np.concatenate([lg.revenue_micros for lg in logs]),
            converted=np.concatenate([lg.converted for lg in logs]),
            attributed_day=np.concatenate([
                lg.attributed_day if lg.attributed_day is not None else np.full(len(lg), -1)
                for lg in logs]) if with_attr else None,
        )


def _parse_int(text, row, name, minimum=0):
    try:
        value = int(text)
    except (TypeError, ValueError):
        raise LogFormatError(f"expected an integer, got {text!r}", row, name) from None
    if value < minimum:
        raise LogFormatError(f"must be >= {minimum}, got {value}", row, name)
    return value


def ingest_log(source, dimensions: Sequence[str] | None = None) -> ImpressionLog:
    """Parse an impression log CSV.

    ``source`` is a path, a binary or text stream, or raw bytes.  Every column
    that is not a core column is a feature (candidate dimension).  When
    ``dimensions`` is given, each name must be a column of the file.
    Row numbers in errors count the header as row 1.
    """
    if isinstance(source, (bytes, bytearray)):
        text = io.StringIO(bytes(source).decode("utf-8"))
    elif isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, encoding="utf-8", newline="") as fh:
            return ingest_log(fh.read().encode("utf-8"), dimensions)
    else:
        data = source.read()
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        text = io.StringIO(data)

    reader = csv.reader(text)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise LogFormatError("missing header row", row=1) from None
    missing = [c for c in CORE_COLUMNS if c not in header]
    if missing:
        raise LogFormatError(f"header lacks required columns {missing}", row=1)
    if len(set(header)) != len(header):
        raise LogFormatError("duplicate column names in header", row=1)
    feature_names = [h for h in header if h not in CORE_COLUMNS and h not in OPTIONAL_COLUMNS]
    if dimensions is not None:
        unknown = [d for d in dimensions if d not in feature_names]
        if unknown:
            raise LogFormatError(f"unknown dimension column(s) {unknown}", row=1, field=unknown[0])
    pos = {h: i for i, h in enumerate(header)}
    has_attr = "attributed_day" in pos

    days, ids, costs, revs, convs, attr = [], [], [], [], [], []
    feats: dict[str, list[str]] = {f: [] for f in feature_names}
    for rownum, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise LogFormatError(f"expected {len(header)} fields, got {len(row)}", rownum)
        day = _parse_int(row[pos["day"]], rownum, "day")
        cost = _parse_int(row[pos["cost_micros"]], rownum, "cost_micros")
        rev = _parse_int(row[pos["revenue_micros"]], rownum, "revenue_micros")
        conv = row[pos["converted"]].strip()
        if conv not in ("0", "1"):
            raise LogFormatError(f"expected 0 or 1, got {conv!r}", rownum, "converted")
        if conv == "0" and rev != 0:
            raise LogFormatError("revenue on an unconverted impression", rownum, "revenue_micros")
        ad = -1
        if has_attr:
            raw = row[pos["attributed_day"]].strip()
            if raw:
                ad = _parse_int(raw, rownum, "attributed_day")
                if ad < day:
                    raise LogFormatError("attributed before the impression day", rownum, "attributed_day")
        days.append(day)
        ids.append(row[pos["impression_id"]])
        costs.append(cost)
        revs.append(rev)
        convs.append(conv == "1")
        attr.append(ad)
        for f in feature_names:
            feats[f].append(row[pos[f]])

    return ImpressionLog(
        day=np.array(days, dtype=np.int64),
        impression_id=np.array(ids, dtype=object),
        features={f: FeatureColumn.from_values(v) for f, v in feats.items()},
        cost_micros=np.array(costs, dtype=np.int64),
        revenue_micros=np.array(revs, dtype=np.int64),
        converted=np.array(convs, dtype=bool),
        attributed_day=np.array(attr, dtype=np.int64) if has_attr else None,
    )


def write_log(log: ImpressionLog, stream: IO[str], with_attribution: bool | None = None) -> None:
    """Write ``log`` in the CSV format read by :func:`ingest_log`."""
    if with_attribution is None:
        with_attribution = log.attributed_day is not None
    # the standard feature columns always appear, blank when the log lacks them
    names = list(DEFAULT_FEATURES) + [n for n in log.dimensions if n not in DEFAULT_FEATURES]
    header = ["day", "impression_id"] + names + ["cost_micros", "revenue_micros", "converted"]
    if with_attribution:
        header.append("attributed_day")
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    blank = [""] * len(log)
    values = [log.features[n].values() if n in log.features else blank for n in names]
    for i in range(len(log)):
        row = [int(log.day[i]), log.impression_id[i]] + [v[i] for v in values]
        row += [int(log.cost_micros[i]), int(log.revenue_micros[i]), int(log.converted[i])]
        if with_attribution:
            ad = -1 if log.attributed_day is None else int(log.attributed_day[i])
            row.append("" if ad < 0 else ad)
        w.writerow(row)


def _check_range(day_range):
    lo, hi = day_range
    if hi < lo:
        raise DataError(f"empty day range {day_range}")
    return lo, hi


def aggregate(log: ImpressionLog, spec: DimensionSpec, day_range: tuple[int, int] | None = None,
              strict: bool = False) -> GroupStats:
    """Per-group volume, spend, revenue and conversions over an inclusive day range."""
    if day_range is not None:
        lo, hi = _check_range(day_range)
        log = log.between(lo, hi)
    codes = log.group_codes(spec, strict=strict)
    n = spec.group_count + 1
    vol = np.bincount(codes, minlength=n)
    spend = _exact_bincount(codes, log.cost_micros, n)
    rev = _exact_bincount(codes, log.revenue_micros, n)
    conv = np.bincount(codes, weights=log.converted.astype(np.int64), minlength=n)
    stats = [SegmentStats(int(vol[g]), int(spend[g]), int(rev[g]), int(conv[g])) for g in range(n)]
    return GroupStats(spec.name, tuple(stats[:-1]), stats[-1])


def _exact_bincount(codes, values, n):
    # np.bincount goes through float64; integer accumulation keeps micros exact.
    out = np.zeros(n, dtype=np.int64)
    np.add.at(out, codes, values)
    return out


@dataclass(frozen=True)
class DailyGroupTable:
    """Day x group arrays for one dimension (last column is overflow)."""

    volume: np.ndarray
    spend_micros: np.ndarray
    revenue_micros: np.ndarray
    conversions: np.ndarray

    @property
    def cpm(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.volume > 0, self.spend_micros / MICROS / np.maximum(self.volume, 1) * 1000, np.nan)


def daily_group_table(log: ImpressionLog, spec: DimensionSpec, days: int) -> DailyGroupTable:
    codes = log.group_codes(spec)
    n = spec.group_count + 1
    keep = log.day < days
    flat = log.day[keep] * n + codes[keep]
    size = days * n

    def count(values):
        out = np.zeros(size, dtype=np.int64)
        np.add.at(out, flat, values[keep])
        return out.reshape(days, n)

    return DailyGroupTable(
        volume=np.bincount(flat, minlength=size).reshape(days, n),
        spend_micros=count(log.cost_micros),
        revenue_micros=count(log.revenue_micros),
        conversions=count(log.converted.astype(np.int64)),
    )


@dataclass(frozen=True)
class RpmSeries:
    values: np.ndarray
    defined: np.ndarray = field(repr=False)


def accumulative_rpm_series(log: ImpressionLog, spec: DimensionSpec, group: int, horizon: int) -> RpmSeries:
    """Accumulative RPM of one group for days 0..horizon-1.

    Entry ``t`` divides the revenue credited by day ``t`` on impressions from
    days ``<= t`` by their volume.  If the log carries no attribution days all
    revenue of those impressions counts.  Days with no volume yet are reported
    as 0 with ``defined`` False.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not 0 <= group <= spec.group_count:
        raise DataError(f"unknown group {group} for dimension {spec.name!r}")
    mask = log.group_codes(spec) == group
    day = log.day[mask]
    rev = log.revenue_micros[mask]
    vol_by_day = np.bincount(day[day < horizon], minlength=horizon)
    cum_vol = np.cumsum(vol_by_day)
    if log.attributed_day is not None:
        credit = np.maximum(log.attributed_day[mask], day)
    else:
        credit = day
    ok = credit < horizon
    rev_by_day = np.zeros(horizon, dtype=np.int64)
    np.add.at(rev_by_day, credit[ok], rev[ok])
    cum_rev = np.cumsum(rev_by_day)
    defined = cum_vol > 0
    values = np.where(defined, cum_rev / MICROS / np.maximum(cum_vol, 1) * 1000.0, 0.0)
    return RpmSeries(values, defined)
