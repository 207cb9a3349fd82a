"""Campaign controllers: the optimization pipeline and the uniform baseline.

A controller is called on adjustment days with the censored log seen so far
and returns the plan for the next period.  Both controllers pace toward the
same per-period budget so that test and control arms spend alike.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import BidPlan, CampaignConfig, DimensionSpec, ImpressionLog, aggregate, daily_group_table, derive_seed
from .errors import InfeasibleBudgetError, LandscapeError, SolverError
from .landscape import FitSettings, LandscapeModel, fit_cpm, fit_volume_marginal
from .optimizer import OverlappingInstance, SolverSettings, overlapping_spend, solve_overlapping
from .segmentation import GroupingRequest, SegmentSchedule

log = logging.getLogger(__name__)


def daily_target(seen: ImpressionLog | None, day: int, config: CampaignConfig) -> float:
    """Per-day spend that exhausts the remaining flight budget evenly over the
    remaining days, kept within 50%..150% of the nominal rate."""
    nominal = config.daily_budget
    if seen is None or day == 0:
        return nominal
    spent = int(seen.cost_micros.sum()) / 1e6
    remaining = max(config.flight_days - day, 1)
    target = (nominal * config.flight_days - spent) / remaining
    return float(np.clip(target, 0.5 * nominal, 1.5 * nominal))


def recent_daily_spend(seen: ImpressionLog, day: int, window: int) -> float:
    first = max(day - window, 0)
    recent = seen.between(first, day - 1)
    return int(recent.cost_micros.sum()) / 1e6 / max(day - first, 1)


class UniformController:
    """Same factor everywhere; the level follows spend toward the budget.

    Spend grows roughly with the square of the bid (price and volume both
    rise), hence the square-root correction.
    """

    def __init__(self, seed: int = 0, pace: bool = True):
        self.pace = pace
        self.level = 1.0

    def __call__(self, seen, day, config: CampaignConfig) -> BidPlan:
        if self.pace and seen is not None and day > 0:
            recent = recent_daily_spend(seen, day, config.adjustment_cadence_days)
            if recent > 0:
                self.level *= math.sqrt(daily_target(seen, day, config) / recent)
            lo, hi = config.factor_bounds
            self.level = float(np.clip(self.level, lo, hi))
        return BidPlan(config.base_bid * self.level)


@dataclass
class PipelineSettings:
    requests: tuple[GroupingRequest, ...]
    first_group_day: int = 7
    explore_sigma: float = 0.05
    jitter_sigma: float = 0.05
    fit: FitSettings = field(default_factory=lambda: FitSettings(starts=3, max_iter=2000))
    solver: SolverSettings = field(default_factory=lambda: SolverSettings(
        starts=2, max_inner=500, mu0=1e3, feas_tol=1e-4, inner_tol=1e-10))
    trust_ratio: float | None = 1.25
    trust_initial: float = 1.03
    trust_tolerance: float = 0.08
    history_days: int | None = None
    spend_damping: float = 0.5


class OptimizingController:
    """Collect data, build groups, then fit the landscape and optimize every period.

    Until every dimension has groups the controller behaves like
    :class:`UniformController`.  The first period after grouping runs a
    randomly perturbed plan so the landscape becomes identifiable; later
    periods solve for the revenue-maximizing plan and add a small jitter to
    keep the history informative.
    """

    def __init__(self, settings: PipelineSettings, seed: int = 0):
        self.settings = settings
        self.seed = seed
        self.pacer = UniformController()
        self.schedules = [SegmentSchedule(r, settings.first_group_day) for r in settings.requests]
        self.specs: tuple[DimensionSpec, ...] | None = None
        self.issued: list[tuple[int, BidPlan]] = []
        self.rng = np.random.default_rng(derive_seed(seed, "controller"))
        self.last_model: LandscapeModel | None = None
        self.diagnostics: list[dict] = []
        self.radius = math.log(settings.trust_initial)
        self.expected_spend: float | None = None

    def __call__(self, seen, day, config: CampaignConfig) -> BidPlan:
        plan = self._decide(seen, day, config)
        self.issued.append((day, plan))
        return plan

    def _decide(self, seen, day, config):
        if self.specs is None and seen is not None:
            specs = [s.update(seen, day) for s in self.schedules]
            if all(s is not None for s in specs):
                self.specs = tuple(specs)
                return self._explore(seen, day, config, self.settings.explore_sigma)
        if self.specs is None:
            return self.pacer(seen, day, config)
        try:
            return self._optimize(seen, day, config)
        except (LandscapeError, SolverError) as exc:
            log.info("day %d: %s; exploring instead", day, exc)
            self.diagnostics.append({"day": day, "fallback": str(exc)})
            return self._explore(seen, day, config, self.settings.explore_sigma)

    def _current_rows(self, config):
        """Factor rows of the plan in force, expressed against the campaign base bid."""
        day, plan = self.issued[-1]
        return self._rows_of(plan, config)

    def _rows_of(self, plan: BidPlan, config):
        K = len(self.specs)
        level = (plan.base_bid / config.base_bid) ** (1.0 / K)
        if plan.dimensions:
            return [np.asarray(r) * level for r in plan.factors]
        return [np.full(s.group_count, level) for s in self.specs]

    def _explore(self, seen, day, config, sigma):
        """Random log-normal perturbation of the plan in force.

        Each dimension's row is rescaled so that its volume-weighted mean
        factor is unchanged, which keeps the exploration roughly spend-neutral.
        """
        rows = self._current_rows(config) if self.issued else [np.ones(s.group_count) for s in self.specs]
        rows = self._perturb(rows, seen, day, config, sigma)
        return BidPlan(config.base_bid, tuple(tuple(r) for r in rows), self.specs)

    def _perturb(self, rows, seen, day, config, sigma):
        lo, hi = config.factor_bounds
        recent = seen.between(max(day - config.adjustment_cadence_days, 0), day - 1) if seen is not None else None
        out = []
        for spec, r in zip(self.specs, rows):
            new = r * np.exp(self.rng.normal(0, sigma, len(r)))
            if recent is not None and len(recent):
                w = np.array([g.volume for g in aggregate(recent, spec)], dtype=float)
                if w.sum() > 0:
                    new *= (w @ r) / (w @ new)
            out.append(np.clip(new, lo, hi))
        return out

    def _history(self, seen, day, config):
        K = len(self.specs)
        tables = [daily_group_table(seen, s, day) for s in self.specs]
        first = 0 if self.settings.history_days is None else max(day - self.settings.history_days, 0)
        in_force = []
        j = 0
        for t in range(day):
            while j + 1 < len(self.issued) and self.issued[j + 1][0] <= t:
                j += 1
            in_force.append(self._rows_of(self.issued[j][1], config))
        volume_history, cpm_obs = [], [[[] for _ in range(s.group_count)] for s in self.specs]
        for t in range(first, day):
            vols = [tables[k].volume[t, :-1] for k in range(K)]
            if sum(v.sum() for v in vols) == 0:
                continue
            volume_history.append((in_force[t], vols))
            for k in range(K):
                cpm = tables[k].cpm[t, :-1]
                for i in range(self.specs[k].group_count):
                    if vols[k][i] > 0:
                        cpm_obs[k][i].append((in_force[t][k][i], cpm[i], vols[k][i]))
        return volume_history, cpm_obs

    def _optimize(self, seen, day, config):
        s = self.settings
        volume_history, cpm_obs = self._history(seen, day, config)
        fit = FitSettings(starts=s.fit.starts, max_iter=s.fit.max_iter, rel_tol=s.fit.rel_tol,
                          seed=derive_seed(self.seed, "fit", day))
        volume = fit_volume_marginal(volume_history, fit)
        cpm = tuple(tuple(fit_cpm(obs) for obs in row) for row in cpm_obs)
        self.last_model = LandscapeModel(volume, cpm, tuple(sp.name for sp in self.specs))
        rpm = tuple(np.array([g.rpm or 0.0 for g in aggregate(seen, sp)]) for sp in self.specs)
        budget = daily_target(seen, day, config)
        lo, hi = config.factor_bounds
        current = self._current_rows(config)
        # Express the target in model units: the ratio of predicted to realized
        # spend under the plan in force absorbs the model's level bias.
        since = self.issued[-1][0]
        realized = recent_daily_spend(seen, day, day - since) if since < day else 0.0
        probe = OverlappingInstance(volume, cpm, rpm, 1.0, (lo, hi))
        predicted = overlapping_spend(probe, current)
        bias = predicted / realized if realized > 0 and predicted > 0 else 1.0
        # Move only part of the way toward the target: fitted spend elasticity
        # tends to be low, and a full step overshoots into a sawtooth.
        goal = predicted + s.spend_damping * (budget * bias - predicted) if predicted > 0 else budget
        inst = OverlappingInstance(volume, cpm, rpm, goal, (lo, hi))
        box = None
        if s.trust_ratio is not None:
            # Trust region on log factors: widen while the last step spent what
            # the model expected, shrink when it missed.
            if self.expected_spend and realized > 0:
                miss = abs(realized / self.expected_spend - 1.0)
                grow = 0.5 if miss > s.trust_tolerance else 1.5
                self.radius = min(self.radius * grow, math.log(s.trust_ratio))
            ratio = math.exp(self.radius)
            box = ([r / ratio for r in current], [r * ratio for r in current])
        try:
            sol = solve_overlapping(inst, seed=derive_seed(self.seed, "solve", day),
                                    starts=s.solver.starts, settings=s.solver, box=box)
            rows = [np.asarray(r) for r in sol.factors]
        except InfeasibleBudgetError:
            floor = box[0] if box is not None else [np.full(sp.group_count, lo) for sp in self.specs]
            rows = [np.clip(r, lo, hi) for r in floor]
            sol = None
        self.expected_spend = None if sol is None else sol.spend / bias
        if s.jitter_sigma > 0:
            rows = self._perturb(rows, seen, day, config, s.jitter_sigma)
        self.diagnostics.append({
            "day": day, "budget": budget, "spend_bias": bias, "trust_ratio": math.exp(self.radius),
            "predicted_spend": None if sol is None else sol.spend,
            "predicted_revenue": None if sol is None else sol.revenue,
            "volume_objective": volume.objective,
        })
        return BidPlan(config.base_bid, tuple(tuple(r) for r in rows), self.specs)


def optimizing_factory(settings: PipelineSettings):
    return _Factory(OptimizingController, settings)


def uniform_factory():
    return _Factory(UniformController, None)


@dataclass(frozen=True)
class _Factory:
    """Picklable seed -> controller constructor for replication workers."""

    cls: type
    settings: object

    def __call__(self, seed):
        if self.settings is None:
            return self.cls(seed=seed)
        return self.cls(self.settings, seed=seed)
