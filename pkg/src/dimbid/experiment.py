"""A/B campaign experiment: settings, execution and report tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .controller import PipelineSettings, optimizing_factory, uniform_factory
from .core import CampaignConfig, DimensionSpec, ImpressionLog, accumulative_rpm_series
from .errors import DataError
from .segmentation import GroupingRequest, build_groups
from .simulator import ABReport, CampaignResult, Metrics, SimEnvironment, ab_experiment

ARMS = ("optimizer", "uniform")


@dataclass(frozen=True)
class ExperimentConfig:
    campaign: CampaignConfig
    requests: tuple[GroupingRequest, ...]
    replications: int = 20
    common_random_numbers: bool = True
    test_arm: str = "optimizer"
    control_arm: str = "uniform"
    pipeline: Mapping = field(default_factory=dict)

    def __post_init__(self):
        for arm in (self.test_arm, self.control_arm):
            if arm not in ARMS:
                raise DataError(f"unknown arm {arm!r}; expected one of {ARMS}")
        if self.replications < 1:
            raise DataError("replications must be >= 1")
        if not self.requests:
            raise DataError("the optimizer needs at least one grouping request")

    def settings(self) -> PipelineSettings:
        try:
            return PipelineSettings(requests=tuple(self.requests), **dict(self.pipeline))
        except TypeError as exc:
            raise DataError(f"bad pipeline settings: {exc}") from None

    def factory(self, arm: str):
        return optimizing_factory(self.settings()) if arm == "optimizer" else uniform_factory()


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    report: ABReport
    runs: tuple[tuple[CampaignResult, CampaignResult], ...]


def run_experiment(env: SimEnvironment, config: ExperimentConfig, seed: int = 0) -> ExperimentResult:
    report, runs = ab_experiment(
        env, config.factory(config.test_arm), config.factory(config.control_arm), config.campaign,
        replications=config.replications, seed=seed,
        common_random_numbers=config.common_random_numbers, keep_runs=True)
    return ExperimentResult(config, report, tuple(runs))


def _arm_totals(metrics: Sequence[Metrics]) -> dict:
    """Campaign metrics averaged over replications."""
    m = list(metrics)
    cost = float(np.mean([x.cost for x in m]))
    sales = float(np.mean([x.sales for x in m]))
    return {
        "cost": cost,
        "sales": sales,
        "roas": float(np.mean([x.roas for x in m])),
        "transaction_rate": float(np.mean([x.transaction_rate for x in m])),
        "ecpm": float(np.mean([x.ecpm for x in m])),
        "impressions": float(np.mean([x.impressions for x in m])),
        "orders": float(np.mean([x.orders for x in m])),
    }


def summary_table(result: ExperimentResult) -> dict:
    rep = result.report
    test = _arm_totals(r.test for r in rep.replications)
    control = _arm_totals(r.control for r in rep.replications)
    med = rep.median_replication()
    return {
        "arms": {"test": {"controller": result.config.test_arm, **test},
                 "control": {"controller": result.config.control_arm, **control}},
        "replications": len(rep.replications),
        "common_random_numbers": result.config.common_random_numbers,
        "positive_roas": rep.positive_roas,
        "sign_test_pvalue": rep.sign_test_pvalue(),
        "median_roas_delta": rep.median_roas_delta,
        "median_replication": {
            "index": med.index,
            "roas_delta": med.roas_delta,
            "ecpm_delta": med.ecpm_delta,
            "transaction_rate_delta": med.transaction_rate_delta,
        },
    }


def format_summary(table: dict) -> str:
    """Plain-text table: one row per arm with Cost, Sales, ROAS, Trans % and eCPM."""
    lines = [f"{'arm':<8} {'controller':<10} {'Cost':>12} {'Sales':>12} {'ROAS':>8} {'Trans %':>8} {'eCPM':>8}"]
    for arm in ("test", "control"):
        a = table["arms"][arm]
        lines.append(f"{arm:<8} {a['controller']:<10} {a['cost']:>12.2f} {a['sales']:>12.2f} "
                     f"{a['roas']:>8.3f} {100 * a['transaction_rate']:>8.3f} {a['ecpm']:>8.4f}")
    med = table["median_replication"]
    lines += [
        "",
        f"replications: {table['replications']}  common random numbers: {table['common_random_numbers']}",
        f"positive ROAS deltas: {table['positive_roas']}/{table['replications']}  "
        f"sign test p = {table['sign_test_pvalue']:.4g}",
        f"median ROAS delta: {table['median_roas_delta']:+.4f}",
        f"median replication #{med['index']}: ROAS {med['roas_delta']:+.4f}, eCPM {med['ecpm_delta']:+.4f}, "
        f"Trans % {100 * med['transaction_rate_delta']:+.4f}",
    ]
    return "\n".join(lines) + "\n"


def replication_rows(result: ExperimentResult) -> list[dict]:
    rows = []
    for r in result.report.replications:
        for arm, m in (("test", r.test), ("control", r.control)):
            rows.append({"replication": r.index, "arm": arm, **m.as_dict()})
    return rows


def flight_groups(log: ImpressionLog, requests: Sequence[GroupingRequest], first_day: int = 7) -> tuple[DimensionSpec, ...]:
    """Groups as the pipeline builds them: from the first ``first_day`` days as seen then."""
    early = log.between(0, first_day - 1).as_of(first_day - 1)
    return tuple(build_groups(early, r, force=True) for r in requests)


def rpm_curve_rows(log: ImpressionLog, spec: DimensionSpec, horizon: int) -> list[dict]:
    """Per-day accumulative RPM of every group of ``spec`` (overflow included when populated)."""
    groups = list(range(spec.group_count))
    if np.any(log.group_codes(spec) == spec.overflow_group):
        groups.append(spec.overflow_group)
    series = {g: accumulative_rpm_series(log, spec, g, horizon) for g in groups}
    rows = []
    for t in range(horizon):
        row = {"day": t}
        for g in groups:
            s = series[g]
            row[f"group_{g}"] = float(s.values[t]) if s.defined[t] else ""
        rows.append(row)
    return rows


def to_csv(rows: Sequence[Mapping], columns: Sequence[str] | None = None) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    columns = list(columns or rows[0].keys())
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
