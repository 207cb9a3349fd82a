"""Bid factor solvers.

Disjoint segments have a closed-form optimum.  Overlapping dimensions are
solved numerically: projected gradient ascent on revenue with an exterior
quadratic penalty on overspend, several starts, and a final bisection that
pulls the best point back onto the feasible side of the budget.

Solvers work with base bid 1; the returned plan carries the campaign base bid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import BidPlan, DimensionSpec
from .errors import DataError, InfeasibleBudgetError, SolverError
from .landscape import CpmModel, MarginalVolumeModel

log = logging.getLogger(__name__)

DEFAULT_BOUNDS = (0.2, 5.0)


@dataclass(frozen=True)
class DisjointInstance:
    rpm: np.ndarray
    beta: np.ndarray
    budget: float

    def __post_init__(self):
        rpm = np.asarray(self.rpm, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        object.__setattr__(self, "rpm", rpm)
        object.__setattr__(self, "beta", beta)
        if rpm.shape != beta.shape or rpm.ndim != 1 or len(rpm) == 0:
            raise DataError("rpm and beta must be 1-D arrays of equal non-zero length")
        if np.any(rpm < 0) or np.any(beta <= 0) or self.budget <= 0:
            raise DataError("need rpm >= 0, beta > 0 and budget > 0")


@dataclass(frozen=True)
class DisjointSolution:
    factors: np.ndarray
    spend: float
    revenue: float


def solve_disjoint(instance: DisjointInstance) -> DisjointSolution:
    """Closed-form optimum of sum(rpm*beta*f) subject to sum(beta*f^2) <= budget.

    The optimal factors are proportional to RPM and exhaust the budget.
    """
    rpm, beta, budget = instance.rpm, instance.beta, instance.budget
    denom = float(np.sum(rpm ** 2 * beta))
    if denom == 0:
        raise SolverError("no revenue signal: every RPM is zero")
    f = np.sqrt(rpm ** 2 * budget / denom)
    return DisjointSolution(f, float(np.sum(beta * f * f)), float(np.sum(rpm * beta * f)))


def effective_bid(plan: BidPlan, groups: Sequence[int]) -> float:
    """Base bid times the factor of the selected group in every dimension.

    The overflow group index (``group_count``) bids with factor 1.
    """
    if len(groups) != len(plan.factors):
        raise DataError(f"plan has {len(plan.factors)} dimensions, got {len(groups)} group indices")
    bid = plan.base_bid
    for k, (row, g) in enumerate(zip(plan.factors, groups)):
        if g == len(row):
            continue
        if not 0 <= g < len(row):
            raise DataError(f"dimension {k}: no group {g}")
        bid *= row[g]
    return bid


@dataclass(frozen=True, eq=False)
class OverlappingInstance:
    """Revenue/spend model over K overlapping dimensions.

    ``budget`` is in currency over the same time unit as the volumes
    (normally one day).  Volumes are impressions, CPM and RPM are per mille.
    """

    volume_model: MarginalVolumeModel
    cpm_models: tuple[tuple[CpmModel, ...], ...]
    rpm: tuple[np.ndarray, ...]
    budget: float
    bounds: tuple[float, float] = DEFAULT_BOUNDS

    def __post_init__(self):
        shape = self.volume_model.shape
        rpm = tuple(np.asarray(r, dtype=float) for r in self.rpm)
        object.__setattr__(self, "rpm", rpm)
        object.__setattr__(self, "cpm_models", tuple(tuple(row) for row in self.cpm_models))
        if tuple(len(r) for r in rpm) != shape or tuple(len(r) for r in self.cpm_models) != shape:
            raise DataError("rpm, CPM models and volume model disagree on shape")
        if self.budget <= 0:
            raise DataError("budget must be positive")
        lo, hi = self.bounds
        if not 0 < lo < hi:
            raise DataError(f"degenerate factor bounds {self.bounds}")
        if any(np.any(r < 0) for r in rpm):
            raise DataError("RPM must be non-negative")

    @property
    def K(self) -> int:
        return len(self.volume_model.shape)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.volume_model.shape


class _Problem:
    """Vectorised revenue and spend with analytic gradients on flat factors."""

    def __init__(self, inst: OverlappingInstance):
        self.inst = inst
        self.shape = inst.shape
        self.K = inst.K
        self.offsets = np.concatenate([[0], np.cumsum(self.shape)]).astype(int)
        self.a = inst.volume_model.intercepts
        self.betas = inst.volume_model.betas
        self.rpm = inst.rpm
        self.cpm_a = [np.array([m.intercept for m in row]) for row in inst.cpm_models]
        self.cpm_b = [np.array([m.slope for m in row]) for row in inst.cpm_models]
        self.n = int(self.offsets[-1])
        self._zeros = [np.zeros(s) for s in self.shape]

    def split(self, x):
        return [x[self.offsets[k]:self.offsets[k + 1]] for k in range(self.K)]

    def volumes(self, x):
        f = self.split(x)
        sums = [fk @ bk for fk, bk in zip(f, self.betas)]
        out = []
        for k in range(self.K):
            other = np.prod([sums[d] for d in range(self.K) if d != k]) if self.K > 1 else 1.0
            out.append(self.a[k] + self.betas[k] * f[k] * other)
        return out

    def _value_grad(self, x, weights, dweights):
        """sum_k sum_i w[k][i] n[k][i] / (1000 K) and its gradient.

        ``dweights[k]`` is dw[k][i]/df[k][i]; weights depend only on their own factor.
        """
        f = self.split(x)
        K = self.K
        sums = [fk @ bk for fk, bk in zip(f, self.betas)]

        def prod_except(*skip):
            p = 1.0
            for d in range(K):
                if d not in skip:
                    p *= sums[d]
            return p

        value = 0.0
        grad = []
        own = []  # sum_i w[k][i] beta[k][i] f[k][i]
        for k in range(K):
            pk = prod_except(k)
            bf = self.betas[k] * f[k]
            n = self.a[k] + bf * pk
            value += float(weights[k] @ n)
            own.append(float(weights[k] @ bf))
            grad.append(weights[k] * self.betas[k] * pk + dweights[k] * n)
        for k in range(K):
            cross = sum(own[m] * prod_except(m, k) for m in range(K) if m != k)
            if K > 1:
                grad[k] = grad[k] + cross * self.betas[k]
        scale = 1.0 / (1000.0 * K)
        return value * scale, np.concatenate(grad) * scale

    def revenue(self, x):
        return self._value_grad(x, self.rpm, self._zeros)

    def spend(self, x):
        f = self.split(x)
        cpm = [a + b * fk for a, b, fk in zip(self.cpm_a, self.cpm_b, f)]
        return self._value_grad(x, cpm, self.cpm_b)

    def dimension_spend(self, x):
        f = self.split(x)
        n = self.volumes(x)
        return [float(np.sum(nk * (a + b * fk)) / 1000.0) for nk, a, b, fk in zip(n, self.cpm_a, self.cpm_b, f)]


def overlapping_revenue(instance: OverlappingInstance, factors) -> float:
    return _Problem(instance).revenue(_flat(instance, factors))[0]


def overlapping_spend(instance: OverlappingInstance, factors) -> float:
    return _Problem(instance).spend(_flat(instance, factors))[0]


def _flat(instance, factors):
    if isinstance(factors, BidPlan):
        factors = factors.factors
    rows = [np.asarray(r, dtype=float) for r in factors]
    if tuple(len(r) for r in rows) != instance.shape:
        raise DataError("factor shape does not match the instance")
    return np.concatenate(rows)


@dataclass(frozen=True)
class SolverSettings:
    starts: int = 8
    seed: int = 0
    max_inner: int = 3000
    max_outer: int = 60
    mu0: float = 10.0
    feas_tol: float = 1e-6
    inner_tol: float = 1e-13


@dataclass(frozen=True, eq=False)
class OverlappingSolution:
    plan: BidPlan
    factors: tuple[np.ndarray, ...]
    revenue: float
    spend: float
    dimension_spend: tuple[float, ...]
    start_objectives: tuple[float, ...] = field(default=(), repr=False)
    budget_binding: bool = True


def _ascent(prob: _Problem, x, mu, budget, r_scale, lo, hi, settings):
    """Projected gradient ascent on revenue - mu/2 * overspend^2 (normalised)."""

    def phi(z):
        r, gr = prob.revenue(z)
        s, gs = prob.spend(z)
        over = s / budget - 1.0
        if over > 0:
            return r / r_scale - 0.5 * mu * over * over, gr / r_scale - mu * over * gs / budget
        return r / r_scale, gr / r_scale

    f, g = phi(x)
    step = 1.0 / max(np.linalg.norm(g), 1e-12)
    for _ in range(settings.max_inner):
        d = np.clip(x + step * g, lo, hi) - x
        dg = float(d @ g)
        if dg <= 0:
            break
        t = 1.0
        while True:
            cand = x + t * d
            fc, gc = phi(cand)
            if fc >= f + 1e-4 * t * dg or t < 1e-16:
                break
            t *= 0.5
        s = cand - x
        y = gc - g
        sy = -float(s @ y)
        step = float(s @ s) / sy if sy > 0 else 10.0 * step
        step = min(max(step, 1e-10), 1e10)
        done = abs(fc - f) <= settings.inner_tol * max(abs(f), 1.0)
        x, f, g = cand, fc, gc
        if done:
            break
    return x


def _pull_back(prob: _Problem, x, budget, lo):
    """Largest t in [0, 1] with spend(lo + t (x - lo)) <= budget."""
    floor = np.broadcast_to(lo, x.shape).astype(float)
    if prob.spend(x)[0] <= budget:
        return x
    a, b = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (a + b)
        if prob.spend(floor + mid * (x - floor))[0] <= budget:
            a = mid
        else:
            b = mid
        if b - a < 1e-15:
            break
    return floor + a * (x - floor)


def _uniform_start(prob: _Problem, budget, lo, hi):
    """Point on the segment lo..hi that spends the budget (uniform for a scalar box)."""
    lo = np.broadcast_to(lo, (prob.n,)).astype(float)
    hi = np.broadcast_to(hi, (prob.n,)).astype(float)
    a, b = 0.0, 1.0
    for _ in range(100):
        mid = 0.5 * (a + b)
        if prob.spend(lo + mid * (hi - lo))[0] <= budget:
            a = mid
        else:
            b = mid
    return lo + a * (hi - lo)


def solve_overlapping(instance: OverlappingInstance, seed: int = 0, starts: int = 8,
                      settings: SolverSettings | None = None, base_bid: float = 1.0,
                      dimensions: Sequence[DimensionSpec] = (),
                      box: tuple[Sequence, Sequence] | None = None) -> OverlappingSolution:
    """Maximise predicted revenue subject to predicted spend <= budget within the factor box.

    The first start is the uniform plan that spends the budget; the remaining
    ones are drawn uniformly from the box.  The best start wins, ties going to
    the lexicographically smallest factor vector.

    ``box`` optionally narrows the bounds per factor (flat lower and upper
    vectors, or per-dimension rows); it is intersected with ``instance.bounds``.
    A controller uses it as a trust region around the plan in force.
    """
    settings = settings or SolverSettings(starts=starts, seed=seed)
    if settings.starts != starts or settings.seed != seed:
        settings = SolverSettings(**{**settings.__dict__, "starts": starts, "seed": seed})
    prob = _Problem(instance)
    lo, hi = instance.bounds
    if box is not None:
        lo = np.clip(_flat_box(box[0], prob.n), lo, hi)
        hi = np.clip(_flat_box(box[1], prob.n), lo, hi)
        if np.any(hi <= lo):
            raise DataError("empty factor box")
    B = instance.budget
    floor = np.broadcast_to(lo, (prob.n,)).astype(float)
    floor_spend = prob.spend(floor)[0]
    if floor_spend > B:
        raise InfeasibleBudgetError(
            f"budget infeasible at floor: spend {floor_spend:.6g} at the lower factor bound exceeds {B:.6g}")

    ceiling = np.broadcast_to(hi, (prob.n,)).astype(float)
    if prob.spend(ceiling)[0] <= B:
        top = _drop_idle(prob, ceiling, lo)
        return _solution(prob, top, base_bid, dimensions, (prob.revenue(top)[0],), binding=False)

    rng = np.random.default_rng(settings.seed)
    x_uniform = _uniform_start(prob, B, lo, hi)
    r_scale = max(abs(prob.revenue(x_uniform)[0]), 1e-12)
    candidates = []
    for s in range(settings.starts):
        x = x_uniform.copy() if s == 0 else rng.uniform(lo, hi, prob.n)
        mu = settings.mu0
        for _ in range(settings.max_outer):
            x = _ascent(prob, x, mu, B, r_scale, lo, hi, settings)
            if prob.spend(x)[0] <= B * (1 + settings.feas_tol):
                break
            mu *= 2.0
        x = _pull_back(prob, x, B, lo)
        candidates.append((prob.revenue(x)[0], x))

    best_val = max(c[0] for c in candidates)
    tied = [c[1] for c in candidates if c[0] >= best_val - 1e-12 * max(abs(best_val), 1.0)]
    best = _drop_idle(prob, min(tied, key=lambda v: tuple(v)), lo)
    return _solution(prob, best, base_bid, dimensions, tuple(c[0] for c in candidates))


def _drop_idle(prob: _Problem, x, lo):
    """Send factors that cannot change revenue to their lower bound.

    A group whose volume does not respond to any factor (zero beta) only
    adds spend through its CPM, so the cheapest setting is the floor.
    """
    value, grad = prob.revenue(x)
    idle = np.abs(grad) <= 1e-12 * max(abs(value), 1e-300)
    if not np.any(idle):
        return x
    y = x.copy()
    y[idle] = np.broadcast_to(lo, x.shape)[idle]
    if prob.revenue(y)[0] >= value - 1e-12 * abs(value) and prob.spend(y)[0] <= prob.spend(x)[0]:
        return y
    return x


def _flat_box(side, n):
    if isinstance(side, (list, tuple)) and len(side) and np.ndim(side[0]) == 1:
        side = np.concatenate([np.asarray(r, dtype=float) for r in side])
    if np.ndim(side) == 0:
        return np.full(n, float(side))
    side = np.asarray(side, dtype=float)
    if side.shape != (n,):
        raise DataError(f"factor box has {side.size} entries, expected {n}")
    return side


def _solution(prob, x, base_bid, dimensions, start_values, binding=True):
    rows = tuple(np.array(r) for r in prob.split(x))
    dims = tuple(dimensions)
    plan = BidPlan(base_bid, tuple(tuple(r) for r in rows), dims if dims else ())
    return OverlappingSolution(
        plan=plan,
        factors=rows,
        revenue=prob.revenue(x)[0],
        spend=prob.spend(x)[0],
        dimension_spend=tuple(prob.dimension_spend(x)),
        start_objectives=start_values,
        budget_binding=binding,
    )
