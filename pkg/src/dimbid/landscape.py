"""Bid landscape approximation from won-impression logs.

Two pieces are fitted from daily history:

* a CPM line per (dimension, group), CPM = intercept + slope * factor, with the
  slope kept non-negative;
* an impression volume model per dimension and group,

      n[k][i] = a[k] + beta[k][i] * f[k][i] * prod_{d != k} sum_j beta[d][j] * f[d][j]

  whose parameters are fixed up to K-1 scale gauges.  The fitter pins them by
  requiring sum_j beta[d][j] = 1 for every dimension after the first.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import BidPlan
from .errors import LandscapeError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CpmModel:
    intercept: float
    slope: float
    residuals: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.slope < 0:
            raise ValueError("CPM slope must be non-negative")

    def predict(self, factor):
        return self.intercept + self.slope * np.asarray(factor, dtype=float)


def predict_cpm(model: CpmModel, factor):
    return model.predict(factor)


def fit_cpm(observations: Sequence[tuple]) -> CpmModel:
    """Weighted least-squares CPM line.

    ``observations`` holds ``(factor, cpm)`` or ``(factor, cpm, weight)``
    tuples; weight is normally the impression volume behind the CPM.  A
    negative fitted slope is clamped to zero, which leaves the weighted mean as
    intercept.
    """
    obs = np.array([(o[0], o[1], o[2] if len(o) > 2 else 1.0) for o in observations], dtype=float)
    if obs.size == 0:
        raise LandscapeError("no CPM observations")
    f, y, w = obs.T
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    keep = w > 0
    f, y, w = f[keep], y[keep], w[keep]
    if len(np.unique(f)) < 2:
        raise LandscapeError("unidentifiable slope: need at least two distinct factor values")
    fbar = np.sum(w * f) / w.sum()
    ybar = np.sum(w * y) / w.sum()
    sxx = np.sum(w * (f - fbar) ** 2)
    slope = np.sum(w * (f - fbar) * (y - ybar)) / sxx
    if slope < 0:
        slope = 0.0
    intercept = ybar - slope * fbar
    resid = y - (intercept + slope * f)
    return CpmModel(float(intercept), float(slope), tuple(float(r) for r in resid))


@dataclass(frozen=True)
class LinearVolumeModel:
    """Volume of disjoint segment i is beta[i] * factor[i]."""

    betas: tuple[float, ...]

    def __post_init__(self):
        if any(b < 0 for b in self.betas):
            raise ValueError("betas must be non-negative")

    def predict(self, factors):
        return np.asarray(self.betas) * np.asarray(factors, dtype=float)


def fit_linear_volume(factors, volumes) -> LinearVolumeModel:
    """Per-segment least squares through the origin; rows are days."""
    f = np.atleast_2d(np.asarray(factors, dtype=float))
    n = np.atleast_2d(np.asarray(volumes, dtype=float))
    beta = np.sum(f * n, axis=0) / np.sum(f * f, axis=0)
    return LinearVolumeModel(tuple(float(max(b, 0.0)) for b in beta))


@dataclass(frozen=True, eq=False)
class MarginalVolumeModel:
    intercepts: np.ndarray
    betas: tuple[np.ndarray, ...]
    objective: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "intercepts", np.asarray(self.intercepts, dtype=float))
        object.__setattr__(self, "betas", tuple(np.asarray(b, dtype=float) for b in self.betas))
        if len(self.intercepts) != len(self.betas):
            raise ValueError("one intercept per dimension")
        if any(np.any(b < 0) for b in self.betas):
            raise ValueError("betas must be non-negative")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.betas)

    def predict(self, factors) -> list[np.ndarray]:
        """Predicted volume per group of every dimension for one plan."""
        rows = _factor_rows(factors, self.shape)
        out = _predict_batch(self.intercepts, self.betas, [r[None, :] for r in rows])
        return [o[0] for o in out]

    def normalized(self) -> MarginalVolumeModel:
        """Same predictions with sum(beta) = 1 on every dimension after the first."""
        betas = [b.copy() for b in self.betas]
        for d in range(1, len(betas)):
            s = betas[d].sum()
            if s > 0:
                betas[d] /= s
                betas[0] *= s
        return MarginalVolumeModel(self.intercepts.copy(), tuple(betas), self.objective)


def _factor_rows(factors, shape):
    if isinstance(factors, BidPlan):
        factors = factors.factors
    rows = [np.asarray(r, dtype=float) for r in factors]
    if tuple(len(r) for r in rows) != tuple(shape):
        raise ValueError(f"plan shape {tuple(len(r) for r in rows)} does not match model shape {tuple(shape)}")
    return rows


def predict_volume_marginal(model: MarginalVolumeModel, plan) -> list[np.ndarray]:
    return model.predict(plan)


def _predict_batch(a, betas, F):
    """Predictions for N plans; F[k] has shape (N, I_k)."""
    sums = [Fk @ bk for Fk, bk in zip(F, betas)]
    out = []
    for k in range(len(F)):
        other = np.ones(F[k].shape[0])
        for d in range(len(F)):
            if d != k:
                other = other * sums[d]
        out.append(a[k] + F[k] * betas[k] * other[:, None])
    return out


class VolumeData:
    """Stacked (plan, observed volumes) history for the volume fitter."""

    def __init__(self, history, shape=None):
        history = list(history)
        if not history:
            raise LandscapeError("empty history; run with perturbed factors to collect data")
        plans = [h[0] for h in history]
        if shape is None:
            first = plans[0].factors if isinstance(plans[0], BidPlan) else plans[0]
            shape = tuple(len(r) for r in first)
        self.shape = tuple(shape)
        K = len(self.shape)
        rows = [_factor_rows(p, self.shape) for p in plans]
        self.F = [np.array([r[k] for r in rows]) for k in range(K)]
        obs = [[np.asarray(v, dtype=float) for v in h[1]] for h in history]
        for o in obs:
            if tuple(len(v) for v in o) != self.shape:
                raise ValueError("observed volumes do not match the plan shape")
        self.Y = [np.array([o[k] for o in obs]) for k in range(K)]
        self.n_plans = len(history)

    @property
    def K(self):
        return len(self.shape)

    def distinct_plans(self) -> int:
        stacked = np.hstack(self.F)
        return len(np.unique(np.round(stacked, 12), axis=0))

    def split(self, theta):
        K = self.K
        a = theta[:K]
        betas, pos = [], K
        for size in self.shape:
            betas.append(theta[pos:pos + size])
            pos += size
        return a, betas


def objective_and_gradient(theta: np.ndarray, data: VolumeData) -> tuple[float, np.ndarray]:
    """Sum of squared volume errors and its gradient w.r.t. (intercepts, betas)."""
    K = data.K
    a, betas = data.split(theta)
    F = data.F
    sums = [Fk @ bk for Fk, bk in zip(F, betas)]

    def prod_except(*skip):
        p = np.ones(F[0].shape[0])
        for d in range(K):
            if d not in skip:
                p = p * sums[d]
        return p

    resid = []
    weighted = []  # sum_j e[m][:, j] * beta[m][j] * F[m][:, j]
    loss = 0.0
    for k in range(K):
        e = a[k] + F[k] * betas[k] * prod_except(k)[:, None] - data.Y[k]
        resid.append(e)
        weighted.append((e * F[k]) @ betas[k])
        loss += float(np.sum(e * e))

    grad_a = np.array([2.0 * e.sum() for e in resid])
    grad_b = []
    for k in range(K):
        g = 2.0 * np.sum(resid[k] * F[k] * prod_except(k)[:, None], axis=0)
        for m in range(K):
            if m != k:
                g = g + 2.0 * (weighted[m] * prod_except(m, k)) @ F[k]
        grad_b.append(g)
    return loss, np.concatenate([grad_a] + grad_b)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1}."""
    n = len(v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, n + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(v - tau, 0.0)


def _project(theta, data):
    K = data.K
    out = theta.copy()
    pos = K
    for k, size in enumerate(data.shape):
        seg = out[pos:pos + size]
        out[pos:pos + size] = np.maximum(seg, 0.0) if k == 0 else project_simplex(seg)
        pos += size
    return out


@dataclass(frozen=True)
class FitSettings:
    starts: int = 8
    max_iter: int = 10_000
    rel_tol: float = 1e-10
    seed: int = 0


def _spg(theta, data, settings: FitSettings, scale_sq):
    """Spectral projected gradient with Armijo backtracking on the projected step."""
    theta = _project(theta, data)
    f, g = objective_and_gradient(theta, data)
    step = 1.0 / max(np.linalg.norm(g), 1e-12)
    for it in range(settings.max_iter):
        d = _project(theta - step * g, data) - theta
        dg = float(d @ g)
        if dg >= 0 or not np.any(d):
            break
        t = 1.0
        while True:
            cand = theta + t * d
            fc, gc = objective_and_gradient(cand, data)
            if fc <= f + 1e-4 * t * dg or t < 1e-20:
                break
            t *= 0.5
        s = cand - theta
        y = gc - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else 1e3 * step
        step = min(max(step, 1e-12), 1e12)
        done = abs(f - fc) <= settings.rel_tol * max(abs(f), 1e-300) or fc <= 1e-30 * scale_sq
        theta, f, g = cand, fc, gc
        if done:
            break
    return theta, f, it + 1


def fit_volume_marginal(history, settings: FitSettings | None = None, shape=None) -> MarginalVolumeModel:
    """Least-squares fit of the marginal volume model.

    ``history`` is a sequence of ``(plan, volumes)`` where ``plan`` is a
    :class:`BidPlan` or factor rows and ``volumes`` holds the observed volume
    of every group of every dimension under that plan.
    """
    settings = settings or FitSettings()
    data = VolumeData(history, shape)
    K = data.K
    n_params = K + sum(data.shape) - (K - 1)
    n_obs = data.n_plans * sum(data.shape)
    if data.distinct_plans() < 2 or n_obs < n_params:
        raise LandscapeError(
            f"history is rank-deficient ({data.distinct_plans()} distinct plans, {n_obs} observations "
            f"for {n_params} parameters); perturb the bid factors to collect more varied data")

    # Fit in units of the mean observed volume for conditioning.
    scale = float(np.mean(np.abs(np.concatenate([y.ravel() for y in data.Y]))))
    scale = scale if scale > 0 else 1.0
    scaled = VolumeData.__new__(VolumeData)
    scaled.__dict__.update(data.__dict__)
    scaled.Y = [y / scale for y in data.Y]
    scale_sq = float(sum(np.sum(y * y) for y in scaled.Y))

    rng = np.random.default_rng(settings.seed)
    best = None
    for _ in range(settings.starts):
        theta0 = _initial_guess(scaled, rng)
        theta, f, iters = _spg(theta0, scaled, settings, scale_sq)
        if best is None or f < best[1]:
            best = (theta, f)
    theta, f = best
    a, betas = scaled.split(theta)
    a = a * scale
    betas = [b.copy() for b in betas]
    betas[0] = betas[0] * scale
    return MarginalVolumeModel(a, tuple(betas), objective=float(f * scale * scale))


def _initial_guess(data: VolumeData, rng) -> np.ndarray:
    K = data.K
    betas = [rng.dirichlet(np.ones(size)) for size in data.shape]
    # size the first dimension's betas so predicted totals match observed ones
    pred = _predict_batch(np.zeros(K), betas, data.F)
    ratio = np.sum(data.Y[0]) / max(np.sum(pred[0]), 1e-12)
    betas[0] = betas[0] * max(ratio, 1e-6) * rng.uniform(0.5, 1.5)
    a = np.array([rng.uniform(0, 0.2) * np.mean(y) for y in data.Y])
    return np.concatenate([a] + betas)


@dataclass(frozen=True, eq=False)
class LandscapeModel:
    """Everything the overlapping optimizer needs from the landscape."""

    volume: MarginalVolumeModel
    cpm: tuple[tuple[CpmModel, ...], ...]
    dimensions: tuple[str, ...] = ()

    @property
    def shape(self):
        return self.volume.shape
