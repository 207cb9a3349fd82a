"""JSON documents for specs, plans, models, environments and run settings.

Every document is a JSON object with a ``kind`` tag.  Floats are written
with ``repr`` precision so that ``load(dump(x)) == x`` exactly.  NaN and
infinities are stored as strings because plain JSON has no spelling for them.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .core import BidPlan, CampaignConfig, DimensionSpec
from .errors import DataError
from .evaluation import DistanceConfig
from .landscape import CpmModel, FitSettings, LandscapeModel, MarginalVolumeModel
from .optimizer import SolverSettings
from .segmentation import GroupingRequest
from .simulator import Distribution, SimCell, SimEnvironment, ThrottlePolicy, factorized_environment

FORMAT_VERSION = 1


def _num(x: float):
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _unnum(x) -> float:
    if isinstance(x, str):
        try:
            return float(x)
        except ValueError:
            raise DataError(f"not a number: {x!r}") from None
    if not isinstance(x, (int, float)) or isinstance(x, bool):
        raise DataError(f"not a number: {x!r}")
    return float(x)


def _need(doc: Mapping, key: str, kind: str):
    try:
        return doc[key]
    except (KeyError, TypeError):
        raise DataError(f"{kind} document is missing {key!r}") from None


def _check_kind(doc: Mapping, kind: str):
    if not isinstance(doc, Mapping):
        raise DataError(f"expected a {kind} document, got {type(doc).__name__}")
    if doc.get("kind", kind) != kind:
        raise DataError(f"expected a {kind} document, got {doc.get('kind')!r}")


# dimension specs and plans

def dimension_spec_to_doc(spec: DimensionSpec) -> dict:
    return {
        "kind": "dimension_spec",
        "name": spec.name,
        "group_count": spec.group_count,
        "prefix_length": spec.prefix_length,
        "groups": {v: int(g) for v, g in sorted(spec.group_of.items())},
    }


def dimension_spec_from_doc(doc: Mapping) -> DimensionSpec:
    _check_kind(doc, "dimension_spec")
    groups = _need(doc, "groups", "dimension_spec")
    return DimensionSpec(
        name=str(_need(doc, "name", "dimension_spec")),
        group_of={str(k): int(v) for k, v in groups.items()},
        group_count=int(_need(doc, "group_count", "dimension_spec")),
        prefix_length=doc.get("prefix_length"),
    )


def bid_plan_to_doc(plan: BidPlan, **extra) -> dict:
    doc = {
        "kind": "bid_plan",
        "base_bid": _num(plan.base_bid),
        "factors": [[_num(f) for f in row] for row in plan.factors],
        "dimensions": [dimension_spec_to_doc(s) for s in plan.dimensions],
    }
    doc.update(extra)
    return doc


def bid_plan_from_doc(doc: Mapping) -> BidPlan:
    _check_kind(doc, "bid_plan")
    return BidPlan(
        base_bid=_unnum(_need(doc, "base_bid", "bid_plan")),
        factors=tuple(tuple(_unnum(f) for f in row) for row in doc.get("factors", ())),
        dimensions=tuple(dimension_spec_from_doc(d) for d in doc.get("dimensions", ())),
    )


# landscape models

def cpm_model_to_doc(model: CpmModel) -> dict:
    return {"kind": "cpm_model", "intercept": _num(model.intercept), "slope": _num(model.slope),
            "residuals": [_num(r) for r in model.residuals]}


def cpm_model_from_doc(doc: Mapping) -> CpmModel:
    _check_kind(doc, "cpm_model")
    return CpmModel(_unnum(_need(doc, "intercept", "cpm_model")), _unnum(_need(doc, "slope", "cpm_model")),
                    tuple(_unnum(r) for r in doc.get("residuals", ())))


def volume_model_to_doc(model: MarginalVolumeModel) -> dict:
    return {
        "kind": "marginal_volume_model",
        "intercepts": [_num(a) for a in model.intercepts],
        "betas": [[_num(b) for b in row] for row in model.betas],
        "objective": _num(model.objective),
    }


def volume_model_from_doc(doc: Mapping) -> MarginalVolumeModel:
    _check_kind(doc, "marginal_volume_model")
    return MarginalVolumeModel(
        intercepts=np.array([_unnum(a) for a in _need(doc, "intercepts", "marginal_volume_model")]),
        betas=tuple(np.array([_unnum(b) for b in row]) for row in _need(doc, "betas", "marginal_volume_model")),
        objective=_unnum(doc.get("objective", "nan")),
    )


def landscape_to_doc(model: LandscapeModel, **extra) -> dict:
    doc = {
        "kind": "landscape_model",
        "dimensions": list(model.dimensions),
        "volume": volume_model_to_doc(model.volume),
        "cpm": [[cpm_model_to_doc(m) for m in row] for row in model.cpm],
    }
    doc.update(extra)
    return doc


def landscape_from_doc(doc: Mapping) -> LandscapeModel:
    _check_kind(doc, "landscape_model")
    return LandscapeModel(
        volume=volume_model_from_doc(_need(doc, "volume", "landscape_model")),
        cpm=tuple(tuple(cpm_model_from_doc(m) for m in row) for row in _need(doc, "cpm", "landscape_model")),
        dimensions=tuple(doc.get("dimensions", ())),
    )


# environments

def _distribution_to_doc(d: Distribution) -> dict:
    return {"family": d.family, **{k: _num(v) for k, v in sorted(d.params.items())}}


def _distribution_from_doc(doc) -> Distribution:
    if isinstance(doc, (int, float)):
        return Distribution.constant(float(doc))
    if not isinstance(doc, Mapping) or "family" not in doc:
        raise DataError(f"bad distribution {doc!r}")
    params = {k: _unnum(v) for k, v in doc.items() if k != "family"}
    return Distribution(str(doc["family"]), params)


def environment_to_doc(env: SimEnvironment) -> dict:
    return {
        "kind": "environment",
        "dimensions": list(env.dimensions),
        "base_bid": _num(env.base_bid),
        "seed": env.seed,
        "throttle": {"mode": env.throttle.mode, "daily_cap": _num(env.throttle.daily_cap)},
        "cells": [
            {
                "features": dict(c.features),
                "daily_opportunities": _num(c.daily_opportunities),
                "competitor_bid": _distribution_to_doc(c.competitor_bid),
                "conversion_prob": _num(c.conversion_prob),
                "revenue": _distribution_to_doc(c.revenue),
                "attribution_delay": [_num(p) for p in c.attribution_delay],
            }
            for c in env.cells
        ],
    }


def _throttle_from_doc(doc) -> ThrottlePolicy:
    if doc is None:
        return ThrottlePolicy()
    return ThrottlePolicy(str(doc.get("mode", "off")), _unnum(doc.get("daily_cap", 0.0)))


def _delay_from_doc(doc) -> tuple[float, ...]:
    """Either an explicit probability list or {"decay_days": tau, "window_days": w}."""
    if doc is None:
        return (1.0,)
    if isinstance(doc, Mapping):
        tau = _unnum(_need(doc, "decay_days", "attribution_delay"))
        window = int(_need(doc, "window_days", "attribution_delay"))
        w = np.exp(-np.arange(window + 1) / tau)
        return tuple(float(x) for x in w / w.sum())
    return tuple(_unnum(p) for p in doc)


def environment_from_doc(doc: Mapping) -> SimEnvironment:
    """Explicit ``cells`` or a ``factorized`` block of per-value effects."""
    _check_kind(doc, "environment")
    seed = int(doc.get("seed", 0))
    throttle = _throttle_from_doc(doc.get("throttle"))
    base_bid = _unnum(_need(doc, "base_bid", "environment"))
    if "factorized" in doc:
        f = doc["factorized"]
        comp = _need(f, "competitor_bid", "factorized")
        rev = _need(f, "revenue", "factorized")
        return factorized_environment(
            {d: {v: {k: _unnum(x) for k, x in eff.items()} for v, eff in vals.items()}
             for d, vals in _need(f, "dimensions", "factorized").items()},
            base_bid=base_bid,
            opportunities=_unnum(_need(f, "opportunities", "factorized")),
            conversion_prob=_unnum(_need(f, "conversion_prob", "factorized")),
            competitor_mu=math.log(_unnum(_need(comp, "median", "competitor_bid"))),
            competitor_sigma=_unnum(_need(comp, "sigma", "competitor_bid")),
            revenue_mu=math.log(_unnum(_need(rev, "median", "revenue"))),
            revenue_sigma=_unnum(_need(rev, "sigma", "revenue")),
            attribution_delay=_delay_from_doc(f.get("attribution_delay")),
            seed=seed,
            throttle=throttle,
        )
    cells = []
    for c in _need(doc, "cells", "environment"):
        cells.append(SimCell(
            features={str(k): str(v) for k, v in _need(c, "features", "cell").items()},
            daily_opportunities=_unnum(_need(c, "daily_opportunities", "cell")),
            competitor_bid=_distribution_from_doc(_need(c, "competitor_bid", "cell")),
            conversion_prob=_unnum(_need(c, "conversion_prob", "cell")),
            revenue=_distribution_from_doc(_need(c, "revenue", "cell")),
            attribution_delay=_delay_from_doc(c.get("attribution_delay")),
        ))
    return SimEnvironment(tuple(_need(doc, "dimensions", "environment")), tuple(cells), base_bid, seed, throttle)


# run settings

def campaign_to_doc(cfg: CampaignConfig) -> dict:
    return {
        "budget_per_period": _num(cfg.budget_per_period),
        "flight_days": cfg.flight_days,
        "base_bid": _num(cfg.base_bid),
        "attribution_window_days": cfg.attribution_window_days,
        "adjustment_cadence_days": cfg.adjustment_cadence_days,
        "factor_bounds": [_num(b) for b in cfg.factor_bounds],
    }


def campaign_from_doc(doc: Mapping) -> CampaignConfig:
    kw = dict(doc)
    if "factor_bounds" in kw:
        kw["factor_bounds"] = tuple(_unnum(b) for b in kw["factor_bounds"])
    try:
        return CampaignConfig(**kw)
    except TypeError as exc:
        raise DataError(f"bad campaign settings: {exc}") from None


def request_to_doc(req: GroupingRequest) -> dict:
    return dict(req.__dict__)


def request_from_doc(doc: Mapping) -> GroupingRequest:
    try:
        return GroupingRequest(**doc)
    except (TypeError, ValueError) as exc:
        raise DataError(f"bad grouping request: {exc}") from None


def _settings_from_doc(cls, doc: Mapping | None):
    if not doc:
        return cls()
    try:
        return cls(**doc)
    except TypeError as exc:
        raise DataError(f"bad {cls.__name__} settings: {exc}") from None


def fit_settings_from_doc(doc) -> FitSettings:
    return _settings_from_doc(FitSettings, doc)


def solver_settings_from_doc(doc) -> SolverSettings:
    return _settings_from_doc(SolverSettings, doc)


def distance_from_doc(doc) -> DistanceConfig:
    return _settings_from_doc(DistanceConfig, doc)


# files

def dumps(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def dump(doc: Any, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc), encoding="utf-8")
    return path


def load(path) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


_READERS = {
    "dimension_spec": dimension_spec_from_doc,
    "bid_plan": bid_plan_from_doc,
    "cpm_model": cpm_model_from_doc,
    "marginal_volume_model": volume_model_from_doc,
    "landscape_model": landscape_from_doc,
    "environment": environment_from_doc,
}

_WRITERS = (
    (DimensionSpec, dimension_spec_to_doc),
    (BidPlan, bid_plan_to_doc),
    (CpmModel, cpm_model_to_doc),
    (MarginalVolumeModel, volume_model_to_doc),
    (LandscapeModel, landscape_to_doc),
    (SimEnvironment, environment_to_doc),
)


def to_doc(obj) -> dict:
    for cls, writer in _WRITERS:
        if isinstance(obj, cls):
            return writer(obj)
    raise TypeError(f"no document form for {type(obj).__name__}")


def from_doc(doc: Mapping):
    kind = doc.get("kind") if isinstance(doc, Mapping) else None
    if kind not in _READERS:
        raise DataError(f"unknown document kind {kind!r}")
    return _READERS[kind](doc)


def save_object(obj, path) -> Path:
    return dump(to_doc(obj), path)


def load_object(path):
    return from_doc(load(path))
