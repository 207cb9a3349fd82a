"""First-price auction DSP simulator producing censored impression logs.

Each cell of the environment is one combination of feature values.  Per day
and cell the simulator draws a Poisson number of auction opportunities and,
for each opportunity, the highest competing bid, whether the user would
convert, the order value and the attribution delay.  These draws depend only
on (seed, day, cell), never on the plan, so runs that share a seed see the
same traffic (common random numbers).  The plan only decides which
opportunities are won; winners pay their own bid.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from .core import (
    MICROS, BidPlan, CampaignConfig, FeatureColumn, ImpressionLog, derive_seed,
)
from .errors import DataError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Distribution:
    """Parametric distribution: ``lognormal`` (mu, sigma), ``constant`` (value)
    or ``uniform`` (low, high)."""

    family: str
    params: Mapping[str, float]

    def __post_init__(self):
        p = dict(self.params)
        object.__setattr__(self, "params", p)
        need = {"lognormal": ("mu", "sigma"), "constant": ("value",), "uniform": ("low", "high")}
        if self.family not in need:
            raise DataError(f"unknown distribution family {self.family!r}")
        missing = [k for k in need[self.family] if k not in p]
        if missing:
            raise DataError(f"{self.family} needs parameters {missing}")
        if self.family == "lognormal" and p["sigma"] < 0:
            raise DataError("lognormal sigma must be >= 0")
        if self.family == "uniform" and p["high"] < p["low"]:
            raise DataError("uniform needs low <= high")
        if self.family == "constant" and p["value"] < 0:
            raise DataError("constant value must be >= 0")

    @classmethod
    def lognormal(cls, mu, sigma):
        return cls("lognormal", {"mu": float(mu), "sigma": float(sigma)})

    @classmethod
    def constant(cls, value):
        return cls("constant", {"value": float(value)})

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        p = self.params
        if self.family == "lognormal":
            return rng.lognormal(p["mu"], p["sigma"], size)
        if self.family == "uniform":
            return rng.uniform(p["low"], p["high"], size)
        rng.random(size)  # keep stream positions aligned across families
        return np.full(size, p["value"])

    def cdf(self, x):
        p = self.params
        x = np.asarray(x, dtype=float)
        if self.family == "lognormal":
            if p["sigma"] == 0:
                return (x >= math.exp(p["mu"])).astype(float)
            return stats.lognorm.cdf(x, s=p["sigma"], scale=math.exp(p["mu"]))
        if self.family == "uniform":
            if p["high"] == p["low"]:
                return (x >= p["low"]).astype(float)
            return np.clip((x - p["low"]) / (p["high"] - p["low"]), 0, 1)
        return (x >= p["value"]).astype(float)

    def mean(self) -> float:
        p = self.params
        if self.family == "lognormal":
            return math.exp(p["mu"] + p["sigma"] ** 2 / 2)
        if self.family == "uniform":
            return (p["low"] + p["high"]) / 2
        return p["value"]


@dataclass(frozen=True)
class SimCell:
    features: Mapping[str, str]
    daily_opportunities: float
    competitor_bid: Distribution
    conversion_prob: float
    revenue: Distribution
    attribution_delay: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "features", {k: str(v) for k, v in self.features.items()})
        probs = np.asarray(self.attribution_delay, dtype=float)
        if not 0 <= self.conversion_prob <= 1:
            raise DataError("conversion_prob must be in [0, 1]")
        if self.daily_opportunities < 0:
            raise DataError("daily_opportunities must be >= 0")
        if len(probs) == 0 or np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, rel_tol=1e-9):
            raise DataError("attribution_delay must be probabilities over days 0..window")
        object.__setattr__(self, "attribution_delay", tuple(float(x) for x in probs))


@dataclass(frozen=True)
class ThrottlePolicy:
    mode: str = "off"
    daily_cap: float = 0.0

    def __post_init__(self):
        if self.mode not in ("off", "spend_cap"):
            raise DataError(f"unknown throttle mode {self.mode!r}")
        if self.mode == "spend_cap" and self.daily_cap <= 0:
            raise DataError("spend_cap throttle needs daily_cap > 0")


@dataclass(frozen=True, eq=False)
class SimEnvironment:
    dimensions: tuple[str, ...]
    cells: tuple[SimCell, ...]
    base_bid: float
    seed: int = 0
    throttle: ThrottlePolicy = ThrottlePolicy()

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        object.__setattr__(self, "cells", tuple(self.cells))
        for c in self.cells:
            if set(c.features) != set(self.dimensions):
                raise DataError(f"cell features {sorted(c.features)} do not match dimensions {self.dimensions}")
        keys = [tuple(c.features[d] for d in self.dimensions) for c in self.cells]
        if len(set(keys)) != len(keys):
            raise DataError("duplicate cells")
        levels = self.levels()
        if len(keys) != math.prod(len(levels[d]) for d in self.dimensions):
            raise DataError("cells must cover every combination of dimension values")
        # dictionary encoding of every cell, per dimension
        codes = {d: np.array([levels[d].index(c.features[d]) for c in self.cells], dtype=np.int32)
                 for d in self.dimensions}
        object.__setattr__(self, "_codes", codes)

    def levels(self) -> dict[str, list[str]]:
        return {d: sorted({c.features[d] for c in self.cells}) for d in self.dimensions}

    def with_seed(self, seed: int) -> SimEnvironment:
        return replace(self, seed=seed)

    @property
    def attribution_window(self) -> int:
        return max(len(c.attribution_delay) for c in self.cells) - 1

    def cell_bids(self, plan: BidPlan) -> np.ndarray:
        """Effective bid (per mille) of every cell under ``plan``."""
        bids = np.full(len(self.cells), float(plan.base_bid))
        for spec, row in zip(plan.dimensions, plan.factors):
            if spec.name not in self.dimensions:
                raise DataError(f"plan dimension {spec.name!r} is not an environment dimension")
            table = np.append(np.asarray(row, dtype=float), 1.0)
            groups = np.array([spec.group_index(c.features[spec.name]) for c in self.cells])
            bids *= table[groups]
        if plan.factors and not plan.dimensions:
            raise DataError("plan has factors but no dimension definitions")
        return bids


@dataclass(frozen=True)
class DayTruth:
    """Hidden per-cell outcome of one simulated day."""

    day: int
    opportunities: np.ndarray
    wins: np.ndarray
    spend_micros: np.ndarray
    conversions: np.ndarray
    revenue_micros: np.ndarray
    bids: np.ndarray


@dataclass(frozen=True)
class DayResult:
    log: ImpressionLog
    truth: DayTruth


def _cell_draws(env: SimEnvironment, day: int, index: int):
    cell = env.cells[index]
    rng = np.random.default_rng([env.seed, day, index])
    n = int(rng.poisson(cell.daily_opportunities))
    comp = cell.competitor_bid.sample(rng, n)
    converts = rng.random(n) < cell.conversion_prob
    value = cell.revenue.sample(rng, n)
    delay = rng.choice(len(cell.attribution_delay), size=n, p=cell.attribution_delay)
    arrival = rng.random(n)
    return comp, converts, value, delay, arrival


def run_day(env: SimEnvironment, plan: BidPlan, day: int) -> DayResult:
    """Simulate one day of auctions under ``plan``; the log holds won auctions only."""
    if day < 0:
        raise DataError("day must be >= 0")
    bids = env.cell_bids(plan)
    n_cells = len(env.cells)
    cost_per_win = np.rint(bids * 1000.0).astype(np.int64)  # CPM bid -> micros per impression

    cell_idx, arrival, conv, value, delay = [], [], [], [], []
    opportunities = np.zeros(n_cells, dtype=np.int64)
    for c in range(n_cells):
        comp, converts, v, dl, arr = _cell_draws(env, day, c)
        opportunities[c] = len(comp)
        won = bids[c] >= comp
        k = int(won.sum())
        cell_idx.append(np.full(k, c, dtype=np.int64))
        arrival.append(arr[won])
        conv.append(converts[won])
        value.append(v[won])
        delay.append(dl[won])
    cell_idx = np.concatenate(cell_idx)
    arrival = np.concatenate(arrival)
    conv = np.concatenate(conv)
    value = np.concatenate(value)
    delay = np.concatenate(delay)
    cost = cost_per_win[cell_idx]

    if env.throttle.mode == "spend_cap":
        order = np.argsort(arrival, kind="stable")
        spent_before = np.cumsum(cost[order]) - cost[order]
        keep = np.zeros(len(cost), dtype=bool)
        keep[order[spent_before < env.throttle.daily_cap * MICROS]] = True
        cell_idx, conv, value, delay, cost = (x[keep] for x in (cell_idx, conv, value, delay, cost))

    revenue = np.where(conv, np.rint(value * MICROS).astype(np.int64), 0)
    ids = np.arange(len(cell_idx), dtype=np.int64) + day * 10_000_000_000
    levels = env.levels()
    features = {d: FeatureColumn(env._codes[d][cell_idx], tuple(levels[d])) for d in env.dimensions}
    log_day = ImpressionLog(
        day=np.full(len(cell_idx), day, dtype=np.int64),
        impression_id=ids,
        features=features,
        cost_micros=cost,
        revenue_micros=revenue,
        converted=conv,
        attributed_day=np.where(conv, day + delay, -1),
    )

    def per_cell(x):
        out = np.zeros(n_cells, dtype=np.int64)
        np.add.at(out, cell_idx, x)
        return out

    truth = DayTruth(
        day=day,
        opportunities=opportunities,
        wins=np.bincount(cell_idx, minlength=n_cells),
        spend_micros=per_cell(cost),
        conversions=per_cell(conv.astype(np.int64)),
        revenue_micros=per_cell(revenue),
        bids=bids,
    )
    return DayResult(log_day, truth)


@dataclass(frozen=True)
class Metrics:
    impressions: int
    cost: float
    sales: float
    orders: int

    @property
    def roas(self) -> float:
        return self.sales / self.cost if self.cost else float("nan")

    @property
    def transaction_rate(self) -> float:
        return self.orders / self.impressions if self.impressions else float("nan")

    @property
    def ecpm(self) -> float:
        return self.cost / self.impressions * 1000.0 if self.impressions else float("nan")

    def as_dict(self) -> dict:
        return {"impressions": self.impressions, "cost": self.cost, "sales": self.sales,
                "orders": self.orders, "roas": self.roas, "transaction_rate": self.transaction_rate,
                "ecpm": self.ecpm}


def log_metrics(log_: ImpressionLog) -> Metrics:
    return Metrics(
        impressions=len(log_),
        cost=int(log_.cost_micros.sum()) / MICROS,
        sales=int(log_.revenue_micros.sum()) / MICROS,
        orders=int(log_.converted.sum()),
    )


Controller = Callable[[ImpressionLog, int, CampaignConfig], BidPlan]


@dataclass(frozen=True, eq=False)
class CampaignResult:
    log: ImpressionLog
    plans: tuple[BidPlan, ...]
    daily: tuple[Metrics, ...]
    truth: tuple[DayTruth, ...] = field(repr=False)
    final: Metrics = None
    flight_days: int = 0

    def settled_log(self) -> ImpressionLog:
        return self.log


def run_campaign(env: SimEnvironment, controller: Controller, config: CampaignConfig,
                 settle: bool = True) -> CampaignResult:
    """Run the flight day by day, asking ``controller`` for a plan every cadence.

    The controller sees the log as of the end of the previous day, with
    revenue credited after that day hidden.  Final metrics count all revenue
    attributed within the window when ``settle`` is true, otherwise only what
    was credited by the last flight day.
    """
    days = []
    truths = []
    plans = []
    plan = None
    for day in range(config.flight_days):
        if day % config.adjustment_cadence_days == 0:
            seen = ImpressionLog.concat([d.log for d in days]).as_of(day - 1) if days else None
            plan = controller(seen, day, config)
            if not plan.within(config.factor_bounds):
                log.warning("day %d: controller plan outside factor bounds %s; clamped", day, config.factor_bounds)
                plan = plan.clamped(config.factor_bounds)
        result = run_day(env, plan, day)
        days.append(result)
        truths.append(result.truth)
        plans.append(plan)
    full = ImpressionLog.concat([d.log for d in days])
    horizon = config.flight_days - 1 + (env.attribution_window if settle else 0)
    full = full.as_of(horizon)
    daily = tuple(log_metrics(full.between(d, d)) for d in range(config.flight_days))
    return CampaignResult(full, tuple(plans), daily, tuple(truths), log_metrics(full), config.flight_days)


@dataclass(frozen=True)
class ReplicationOutcome:
    index: int
    test: Metrics
    control: Metrics

    @property
    def roas_delta(self) -> float:
        return self.test.roas - self.control.roas

    @property
    def ecpm_delta(self) -> float:
        return self.test.ecpm - self.control.ecpm

    @property
    def transaction_rate_delta(self) -> float:
        return self.test.transaction_rate - self.control.transaction_rate


@dataclass(frozen=True)
class ABReport:
    replications: tuple[ReplicationOutcome, ...]

    def deltas(self, name: str) -> np.ndarray:
        return np.array([getattr(r, f"{name}_delta") for r in self.replications])

    @property
    def positive_roas(self) -> int:
        return int(np.sum(self.deltas("roas") > 0))

    @property
    def median_roas_delta(self) -> float:
        return float(np.median(self.deltas("roas")))

    def median_replication(self) -> ReplicationOutcome:
        """Replication whose ROAS delta is the (lower) median."""
        order = np.argsort(self.deltas("roas"), kind="stable")
        return self.replications[int(order[(len(order) - 1) // 2])]

    def sign_test_pvalue(self) -> float:
        d = self.deltas("roas")
        nonzero = d[d != 0]
        if len(nonzero) == 0:
            return 1.0
        return float(stats.binomtest(int(np.sum(nonzero > 0)), len(nonzero), 0.5).pvalue)

    def summary(self) -> dict:
        return {
            "replications": len(self.replications),
            "median_roas_delta": self.median_roas_delta,
            "mean_roas_delta": float(np.mean(self.deltas("roas"))),
            "positive_roas": self.positive_roas,
            "sign_test_pvalue": self.sign_test_pvalue(),
            "median_ecpm_delta": float(np.median(self.deltas("ecpm"))),
            "median_transaction_rate_delta": float(np.median(self.deltas("transaction_rate"))),
        }


def _replicate(args):
    env, test_factory, control_factory, config, seed, index, common = args
    test_seed = derive_seed(seed, "replication", index, "test")
    control_seed = test_seed if common else derive_seed(seed, "replication", index, "control")
    test = run_campaign(env.with_seed(test_seed), test_factory(test_seed), config)
    control = run_campaign(env.with_seed(control_seed), control_factory(control_seed), config)
    return ReplicationOutcome(index, test.final, control.final), test, control


def ab_experiment(env: SimEnvironment, test_factory, control_factory, config: CampaignConfig,
                  replications: int = 20, seed: int = 0, common_random_numbers: bool = False,
                  workers: int = 1, keep_runs: bool = False):
    """Paired test/control campaigns with equal budgets over seeded replications.

    ``*_factory(seed)`` must return a fresh controller.  Each arm runs on its
    own seeded copy of ``env``; with ``common_random_numbers`` both arms of a
    replication see identical traffic.  Returns the report, plus the per-arm
    campaign results when ``keep_runs`` is set.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    jobs = [(env, test_factory, control_factory, config, seed, r, common_random_numbers)
            for r in range(replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, jobs))
    else:
        results = [_replicate(j) for j in jobs]
    report = ABReport(tuple(r[0] for r in results))
    if keep_runs:
        return report, [(r[1], r[2]) for r in results]
    return report


def factorized_environment(dimensions: Mapping[str, Mapping[str, Mapping[str, float]]], *,
                           base_bid: float, opportunities: float, conversion_prob: float,
                           competitor_mu: float, competitor_sigma: float,
                           revenue_mu: float, revenue_sigma: float,
                           attribution_delay: Sequence[float] = (1.0,), seed: int = 0,
                           throttle: ThrottlePolicy = ThrottlePolicy()) -> SimEnvironment:
    """Build the full cell grid from per-value effects.

    ``dimensions[name][value]`` may hold ``volume`` (multiplier on opportunities),
    ``conversion`` (multiplier on conversion probability) and ``price``
    (additive shift of the competitor log-bid location).
    """
    names = list(dimensions)
    grids = [sorted(dimensions[n]) for n in names]
    cells = []
    for combo in _product(grids):
        vol, conv, shift = opportunities, conversion_prob, competitor_mu
        for n, v in zip(names, combo):
            eff = dimensions[n][v]
            vol *= eff.get("volume", 1.0)
            conv *= eff.get("conversion", 1.0)
            shift += eff.get("price", 0.0)
        cells.append(SimCell(
            features=dict(zip(names, combo)),
            daily_opportunities=vol,
            competitor_bid=Distribution.lognormal(shift, competitor_sigma),
            conversion_prob=min(conv, 1.0),
            revenue=Distribution.lognormal(revenue_mu, revenue_sigma),
            attribution_delay=tuple(attribution_delay),
        ))
    return SimEnvironment(tuple(names), tuple(cells), base_bid, seed, throttle)


def _product(grids):
    if not grids:
        yield ()
        return
    for v in grids[0]:
        for rest in _product(grids[1:]):
            yield (v,) + rest


def truth_summary(env: SimEnvironment, truths: Sequence[DayTruth]) -> dict:
    """Per-cell totals and parameters; never handed to controllers."""
    cells = []
    for i, c in enumerate(env.cells):
        cells.append({
            "features": dict(c.features),
            "opportunities": int(sum(t.opportunities[i] for t in truths)),
            "wins": int(sum(t.wins[i] for t in truths)),
            "spend_micros": int(sum(t.spend_micros[i] for t in truths)),
            "conversions": int(sum(t.conversions[i] for t in truths)),
            "revenue_micros": int(sum(t.revenue_micros[i] for t in truths)),
            "expected_rpm": c.conversion_prob * c.revenue.mean() * 1000.0,
        })
    return {"seed": env.seed, "days": len(truths), "cells": cells}
