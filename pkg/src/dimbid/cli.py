"""Command-line front end.

    dimbid [--seed N] [--config RUN.json] [--out DIR] [--strict] <command> ...

Commands: simulate, segment, evaluate, fit, optimize, experiment, report.
Exit status: 0 success, 1 usage error, 2 data error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io as docs
from .core import (
    BidPlan,
    CampaignConfig,
    DimensionSpec,
    ImpressionLog,
    aggregate,
    daily_group_table,
    derive_seed,
    ingest_log,
    write_log,
)
from .errors import DataError, DimbidError, LandscapeError, NotReadyError, SolverError
from .evaluation import (
    DistanceConfig,
    GroupShareTable,
    dimension_separation,
    information_value,
    joint_counts,
    modified_woe,
    mutual_information,
)
from .experiment import (
    ExperimentConfig,
    flight_groups,
    format_summary,
    replication_rows,
    rpm_curve_rows,
    run_experiment,
    summary_table,
    to_csv,
)
from .landscape import FitSettings, LandscapeModel, fit_cpm, fit_volume_marginal
from .optimizer import OverlappingInstance, solve_overlapping
from .segmentation import GroupingRequest, build_groups
from .simulator import SimEnvironment, log_metrics, run_campaign, truth_summary

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("dimbid")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# run configuration

@dataclass
class RunConfig:
    """Settings shared by the subcommands, read from ``--config`` (JSON).

    Sections: ``campaign``, ``segmentation`` (list of grouping requests),
    ``distance``, ``fit``, ``solver`` (plus ``bounds``), ``experiment`` and
    ``pipeline``.  An environment document may carry the same sections under
    ``run``; the ``--config`` file takes precedence.
    """

    campaign: dict = field(default_factory=dict)
    segmentation: list = field(default_factory=list)
    distance: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    pipeline: dict = field(default_factory=dict)

    @classmethod
    def from_doc(cls, doc) -> RunConfig:
        if not isinstance(doc, dict):
            raise DataError("run configuration must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known - {"kind"}
        if unknown:
            raise DataError(f"unknown run configuration section(s): {sorted(unknown)}")
        return cls(**{k: doc[k] for k in known if k in doc})

    def merged_over(self, base: RunConfig) -> RunConfig:
        out = {}
        for k in self.__dataclass_fields__:
            mine, theirs = getattr(self, k), getattr(base, k)
            if isinstance(mine, dict):
                out[k] = {**theirs, **mine}
            else:
                out[k] = mine or theirs
        return RunConfig(**out)

    def requests(self) -> tuple[GroupingRequest, ...]:
        return tuple(docs.request_from_doc(r) for r in self.segmentation)

    def campaign_config(self, **override) -> CampaignConfig:
        doc = {**self.campaign, **{k: v for k, v in override.items() if v is not None}}
        if "budget_per_period" not in doc or "base_bid" not in doc:
            raise DataError("campaign settings need budget_per_period and base_bid")
        doc.setdefault("flight_days", 30)
        return docs.campaign_from_doc(doc)


# helpers

def _out(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write(path: Path, text: str, written: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    written.append(path)


def _write_doc(path: Path, doc, written: list) -> None:
    _write(path, docs.dumps(doc), written)


def _manifest(out: Path, written: Sequence[Path], command: str, seed: int) -> Path:
    files = sorted(str(p.relative_to(out)) if p.is_relative_to(out) else str(p) for p in written)
    path = out / "manifest.json"
    docs.dump({"kind": "manifest", "command": command, "seed": seed, "files": files}, path)
    return path


def _load_env(path) -> tuple[SimEnvironment, RunConfig]:
    doc = docs.load(path)
    env = docs.environment_from_doc(doc)
    run = RunConfig.from_doc(doc.get("run", {})) if isinstance(doc, dict) else RunConfig()
    return env, run


def _load_specs(paths) -> tuple[DimensionSpec, ...]:
    specs = []
    for p in paths or ():
        doc = docs.load(p)
        if isinstance(doc, dict) and doc.get("kind") == "segments":
            specs.extend(docs.dimension_spec_from_doc(d) for d in doc["dimensions"])
        else:
            specs.append(docs.dimension_spec_from_doc(doc))
    return tuple(specs)


def _read_log(path, dims=None) -> ImpressionLog:
    try:
        return ingest_log(path, dims)
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None


def _plan_history(doc) -> list[tuple[int, BidPlan]]:
    if not isinstance(doc, dict) or doc.get("kind") != "plan_history":
        raise DataError("expected a plan_history document")
    return [(int(e["day"]), docs.bid_plan_from_doc(e["plan"])) for e in doc["plans"]]


def _in_force(history, day):
    plan = None
    for d, p in history:
        if d <= day:
            plan = p
    return plan


def _rows_for(plan: BidPlan, specs: Sequence[DimensionSpec], base_bid: float):
    """Factor rows of ``plan`` against ``specs``, with any base-bid change spread evenly."""
    K = len(specs)
    level = (plan.base_bid / base_bid) ** (1.0 / K)
    by_name = {s.name: (s, row) for s, row in zip(plan.dimensions, plan.factors)}
    rows = []
    for spec in specs:
        if spec.name in by_name:
            s, row = by_name[spec.name]
            if s != spec:
                raise DataError(f"plan history uses a different grouping for {spec.name!r}")
            rows.append(np.asarray(row, dtype=float) * level)
        else:
            rows.append(np.full(spec.group_count, level))
    return rows


# simulate

def cmd_simulate(args, run: RunConfig) -> int:
    env, env_run = _load_env(args.env)
    run = run.merged_over(env_run)
    env = env.with_seed(derive_seed(args.seed, "simulate"))
    days = args.days or int(run.campaign.get("flight_days", 30))
    cadence = int(run.campaign.get("adjustment_cadence_days", 2))
    base = args.base_bid or float(run.campaign.get("base_bid", env.base_bid))
    if args.plan:
        fixed = docs.bid_plan_from_doc(docs.load(args.plan))
    else:
        fixed = BidPlan(base)
    specs = _load_specs(args.spec)
    rng = np.random.default_rng(derive_seed(args.seed, "simulate", "explore"))
    lo, hi = tuple(run.campaign.get("factor_bounds", (0.2, 5.0)))

    def controller(seen, day, config):
        if args.explore and specs:
            rows = [np.clip(np.exp(rng.normal(0, args.explore, s.group_count)), lo, hi) for s in specs]
            return BidPlan(fixed.base_bid, tuple(tuple(r) for r in rows), specs)
        return fixed

    config = CampaignConfig(budget_per_period=1.0, flight_days=days, base_bid=fixed.base_bid,
                            adjustment_cadence_days=cadence, factor_bounds=(min(lo, 1.0), max(hi, 1.0)))
    result = run_campaign(env, controller, config, settle=args.settle)
    observed = result.log if args.settle else result.log.as_of(days - 1)
    out = _out(args)
    written = []
    log_path = out / "log.csv"
    with open(log_path, "w", encoding="utf-8", newline="") as fh:
        write_log(observed, fh, with_attribution=args.attribution)
    written.append(log_path)
    history = {"kind": "plan_history", "base_bid": fixed.base_bid,
               "plans": [{"day": d, "plan": docs.bid_plan_to_doc(p)} for d, p in enumerate(result.plans)
                         if d % cadence == 0]}
    _write_doc(out / "plans.json", history, written)
    _write_doc(out / "simulate.json", {"kind": "simulation", "days": days, "seed": args.seed,
                                        "metrics": log_metrics(observed).as_dict()}, written)
    truth_path = Path(args.truth) if args.truth else out.parent / (out.name + "_truth") / "truth.json"
    truth = truth_summary(env, result.truth)
    truth["kind"] = "hidden_truth"
    docs.dump(truth, truth_path)
    _manifest(out, written, "simulate", args.seed)
    print(f"wrote {len(observed)} impressions to {log_path}; truth kept at {truth_path}")
    return EXIT_OK


# segment

def cmd_segment(args, run: RunConfig) -> int:
    requests = list(run.requests())
    for item in args.dimension or ():
        name, _, count = item.partition(":")
        if not count:
            raise UsageError(f"--dimension expects NAME:GROUPS, got {item!r}")
        requests = [r for r in requests if r.dimension != name]
        requests.append(GroupingRequest(
            name, int(count), rank_metric=args.metric or "rpm",
            min_volume_threshold=args.min_volume if args.min_volume is not None else 1000,
            min_order_threshold=args.min_orders if args.min_orders is not None else 10,
            prefix_length=args.prefix))
    if not requests:
        raise UsageError("nothing to segment: pass --dimension NAME:GROUPS or a segmentation config")
    records = _read_log(args.log, [r.dimension for r in requests])
    if args.through_day is not None:
        records = records.between(0, args.through_day).as_of(args.through_day)
    out = _out(args)
    written = []
    specs = []
    for req in requests:
        spec = build_groups(records, req, force=args.force)
        specs.append(spec)
        _write_doc(out / f"spec_{spec.name}.json", docs.dimension_spec_to_doc(spec), written)
    _write_doc(out / "segments.json", {"kind": "segments",
                                       "dimensions": [docs.dimension_spec_to_doc(s) for s in specs]}, written)
    _manifest(out, written, "segment", args.seed)
    for s in specs:
        print(f"{s.name}: {len(s.group_of)} values in {s.group_count} groups")
    return EXIT_OK


# evaluate

def _woe_rows(records, spec, epsilon):
    table = GroupShareTable.from_log(records, spec, epsilon)
    woe = modified_woe(table)
    return table, [{"group": g, "conversion_share": float(table.conversion_share[g]),
                    "impression_share": float(table.impression_share[g]), "woe": float(woe[g])}
                   for g in range(spec.group_count)]


def evaluation_doc(records: ImpressionLog, specs, distance: DistanceConfig, epsilon: float):
    report = {"kind": "evaluation", "dimensions": {}, "pairs": []}
    csvs = {}
    for spec in specs:
        sep = dimension_separation(records, spec, distance)
        table, rows = _woe_rows(records, spec, epsilon)
        report["dimensions"][spec.name] = {
            "separation_median": sep.median,
            "separation_mean": sep.mean,
            "distances": [{"groups": [i, j], "distance": d} for (i, j), d in sorted(sep.distances.items())],
            "woe": [r["woe"] for r in rows],
            "information_value": information_value(table),
        }
        csvs[f"woe_{spec.name}.csv"] = to_csv(rows)
        csvs[f"rpm_curves_{spec.name}.csv"] = to_csv(rpm_curve_rows(records, spec, distance.horizon))
    for a, b in itertools.combinations(specs, 2):
        report["pairs"].append({"dimensions": [a.name, b.name],
                                "mutual_information": mutual_information(joint_counts(records, a, b), epsilon=0.0)})
    return report, csvs


def cmd_evaluate(args, run: RunConfig) -> int:
    specs = _load_specs(args.spec)
    if not specs:
        raise UsageError("evaluate needs at least one --spec")
    records = _read_log(args.log, [s.name for s in specs])
    distance = docs.distance_from_doc({**run.distance, **({"lam": args.lam} if args.lam is not None else {}),
                                       **({"horizon": args.horizon} if args.horizon else {})})
    epsilon = 0.0 if args.strict else 0.5
    report, csvs = evaluation_doc(records, specs, distance, epsilon)
    out = _out(args)
    written = []
    _write_doc(out / "evaluation.json", report, written)
    for name, text in csvs.items():
        _write(out / name, text, written)
    _manifest(out, written, "evaluate", args.seed)
    for name, d in report["dimensions"].items():
        print(f"{name}: separation median {d['separation_median']:.4g}, IV {d['information_value']:.4g}")
    for p in report["pairs"]:
        print(f"MI {p['dimensions'][0]} x {p['dimensions'][1]}: {p['mutual_information']:.4g}")
    return EXIT_OK


# fit

def volume_history(records: ImpressionLog, history, specs, base_bid: float, days: int | None = None):
    """Per-day (factor rows, group volumes) plus per-group CPM observations."""
    days = days or (int(records.day.max()) + 1 if len(records) else 0)
    tables = [daily_group_table(records, s, days) for s in specs]
    vol_hist = []
    cpm_obs = [[[] for _ in range(s.group_count)] for s in specs]
    for t in range(days):
        plan = _in_force(history, t)
        if plan is None:
            continue
        rows = _rows_for(plan, specs, base_bid)
        vols = [tab.volume[t, :-1] for tab in tables]
        if sum(v.sum() for v in vols) == 0:
            continue
        vol_hist.append((rows, vols))
        for k, spec in enumerate(specs):
            cpm = tables[k].cpm[t, :-1]
            for i in range(spec.group_count):
                if vols[k][i] > 0:
                    cpm_obs[k][i].append((rows[k][i], cpm[i], vols[k][i]))
    return vol_hist, cpm_obs


def fit_landscape(records, history, specs, base_bid, settings: FitSettings) -> tuple[LandscapeModel, list]:
    vol_hist, cpm_obs = volume_history(records, history, specs, base_bid)
    volume = fit_volume_marginal(vol_hist, settings)
    cpm = tuple(tuple(fit_cpm(obs) for obs in row) for row in cpm_obs)
    return LandscapeModel(volume, cpm, tuple(s.name for s in specs)), vol_hist


def scatter_rows(model: LandscapeModel, vol_hist, specs) -> list[dict]:
    rows = []
    for t, (factors, vols) in enumerate(vol_hist):
        pred = model.volume.predict(factors)
        for k, spec in enumerate(specs):
            for i in range(spec.group_count):
                rows.append({"obs": t, "dimension": spec.name, "group": i,
                             "observed": int(vols[k][i]), "predicted": float(pred[k][i])})
    return rows


def _correlation(rows) -> float:
    if len(rows) < 2:
        return float("nan")
    o = np.array([r["observed"] for r in rows], dtype=float)
    p = np.array([r["predicted"] for r in rows], dtype=float)
    if o.std() == 0 or p.std() == 0:
        return float("nan")
    return float(np.corrcoef(o, p)[0, 1])


def cmd_fit(args, run: RunConfig) -> int:
    hist_doc = docs.load(args.plans)
    history = _plan_history(hist_doc)
    specs = _load_specs(args.spec) or _specs_from_history(history)
    if not specs:
        raise DataError("no dimension groups: pass --spec or a plan history with grouped plans")
    records = _read_log(args.log, [s.name for s in specs])
    base = float(hist_doc.get("base_bid", history[0][1].base_bid))
    fs = docs.fit_settings_from_doc({**run.fit, "seed": derive_seed(args.seed, "fit")})
    model, vol_hist = fit_landscape(records, history, specs, base, fs)
    rows = scatter_rows(model, vol_hist, specs)
    out = _out(args)
    written = []
    _write_doc(out / "landscape.json", docs.landscape_to_doc(
        model, base_bid=base, observations=len(vol_hist), volume_correlation=docs._num(_correlation(rows)),
        groups=[docs.dimension_spec_to_doc(s) for s in specs]), written)
    _write(out / "volume_scatter.csv", to_csv(rows), written)
    _manifest(out, written, "fit", args.seed)
    print(f"fitted on {len(vol_hist)} days; predicted vs observed volume r = {_correlation(rows):.4f}")
    return EXIT_OK


def _specs_from_history(history):
    for _, plan in reversed(history):
        if plan.dimensions:
            return tuple(plan.dimensions)
    return ()


# optimize

def cmd_optimize(args, run: RunConfig) -> int:
    mdoc = docs.load(args.model)
    model = docs.landscape_from_doc(mdoc)
    specs = _load_specs(args.spec) or tuple(docs.dimension_spec_from_doc(d) for d in mdoc.get("groups", ()))
    if tuple(s.name for s in specs) != tuple(model.dimensions):
        raise DataError(f"groups {[s.name for s in specs]} do not match model dimensions {list(model.dimensions)}")
    records = _read_log(args.log, [s.name for s in specs])
    stats = [aggregate(records, s) for s in specs]
    rpm = tuple(np.array([g.rpm or 0.0 for g in st]) for st in stats)
    budget = args.budget if args.budget is not None else run.campaign.get("budget_per_period")
    if budget is None:
        raise UsageError("optimize needs --budget (per day) or campaign.budget_per_period in the config")
    if args.budget is None:
        budget = float(budget) / int(run.campaign.get("adjustment_cadence_days", 2))
    bounds = tuple(run.solver.get("bounds", run.campaign.get("factor_bounds", (0.2, 5.0))))
    solver_doc = {k: v for k, v in run.solver.items() if k != "bounds"}
    settings = docs.solver_settings_from_doc({**solver_doc, "seed": derive_seed(args.seed, "optimize")})
    base = args.base_bid or float(mdoc.get("base_bid", run.campaign.get("base_bid", 1.0)))
    inst = OverlappingInstance(model.volume, model.cpm, rpm, float(budget), bounds)
    sol = solve_overlapping(inst, seed=settings.seed, starts=settings.starts, settings=settings,
                            base_bid=base, dimensions=specs)
    predicted = model.volume.predict(sol.factors)
    negative = [[spec.name, i] for spec, row in zip(specs, predicted) for i in np.flatnonzero(row < 0).tolist()]
    if negative:
        warnings.warn(f"the volume model predicts negative volume for groups {negative} at the chosen factors; "
                      "narrow the solver bounds toward the observed factor range")
    out = _out(args)
    written = []
    _write_doc(out / "plan.json", docs.bid_plan_to_doc(
        sol.plan,
        predicted={"spend": sol.spend, "revenue": sol.revenue,
                   "dimension_spend": list(sol.dimension_spend), "budget": float(budget)},
        diagnostics={"budget_binding": sol.budget_binding, "start_objectives": list(sol.start_objectives),
                     "bounds": list(bounds), "starts": settings.starts, "seed": settings.seed,
                     "negative_volume_groups": negative}), written)
    _manifest(out, written, "optimize", args.seed)
    print(f"predicted spend {sol.spend:.4f} of {budget:.4f}, revenue {sol.revenue:.4f}")
    return EXIT_OK


# experiment

def experiment_config(run: RunConfig, args) -> ExperimentConfig:
    exp = dict(run.experiment)
    if args.replications is not None:
        exp["replications"] = args.replications
    if args.crn is not None:
        exp["common_random_numbers"] = args.crn
    if args.control:
        exp["control_arm"] = args.control
    if args.test:
        exp["test_arm"] = args.test
    try:
        return ExperimentConfig(campaign=run.campaign_config(), requests=run.requests(),
                                pipeline=run.pipeline, **exp)
    except TypeError as exc:
        raise DataError(f"bad experiment settings: {exc}") from None


def cmd_experiment(args, run: RunConfig) -> int:
    env, env_run = _load_env(args.env)
    run = run.merged_over(env_run)
    cfg = experiment_config(run, args)
    result = run_experiment(env, cfg, seed=derive_seed(args.seed, "experiment"))
    table = summary_table(result)
    out = _out(args)
    written = []
    text = format_summary(table)
    _write(out / "summary.txt", text, written)
    _write_doc(out / "summary.json", {"kind": "experiment_summary", **_plain(table)}, written)
    _write(out / "replications.csv", to_csv(replication_rows(result)), written)
    horizon = cfg.campaign.flight_days
    first = result.runs[0]
    specs = flight_groups(first[0].log, cfg.requests)
    _write_doc(out / "groups.json", {"kind": "segments", "replication": 0,
                                     "dimensions": [docs.dimension_spec_to_doc(s) for s in specs]}, written)
    for arm, res in (("test", first[0]), ("control", first[1])):
        for spec in specs:
            _write(out / "rpm_curves" / f"{arm}_{spec.name}.csv", to_csv(rpm_curve_rows(res.log, spec, horizon)),
                   written)
    _manifest(out, written, "experiment", args.seed)
    sys.stdout.write(text)
    return EXIT_OK


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return docs._num(x)
    return x


# report

def cmd_report(args, run: RunConfig) -> int:
    out = _out(args)
    written = []
    lines = []
    if args.experiment:
        exp_dir = Path(args.experiment)
        summary = exp_dir / "summary.txt"
        if not summary.exists():
            raise DataError(f"no experiment summary in {exp_dir}")
        lines += ["experiment", summary.read_text(encoding="utf-8")]
        manifest = exp_dir / "manifest.json"
        if manifest.exists():
            lines += ["experiment files:"] + [f"  {f}" for f in docs.load(manifest)["files"]]
    if args.log:
        specs = _load_specs(args.spec)
        records = _read_log(args.log, [s.name for s in specs] or None)
        if len(records) == 0:
            lines.append("no data: the log holds no impressions")
        else:
            m = log_metrics(records)
            lines.append(f"log: {m.impressions} impressions over {int(records.day.max()) + 1} days; cost {m.cost:.2f}, "
                         f"sales {m.sales:.2f}, ROAS {m.roas:.4f}, Trans % {100 * m.transaction_rate:.4f}, "
                         f"eCPM {m.ecpm:.4f}")
            distance = docs.distance_from_doc(run.distance)
            if specs:
                rep, csvs = evaluation_doc(records, specs, distance, 0.0 if args.strict else 0.5)
                for name, text in csvs.items():
                    _write(out / name, text, written)
                for name, d in rep["dimensions"].items():
                    lines.append(f"{name}: IV {d['information_value']:.4g}, separation median "
                                 f"{d['separation_median']:.4g}, WOE {np.round(d['woe'], 1).tolist()}")
            if args.model and args.plans:
                mdoc = docs.load(args.model)
                model = docs.landscape_from_doc(mdoc)
                history = _plan_history(docs.load(args.plans))
                mspecs = specs or tuple(docs.dimension_spec_from_doc(d) for d in mdoc.get("groups", ()))
                vol_hist, _ = volume_history(records, history, mspecs, float(mdoc.get("base_bid", 1.0)))
                rows = scatter_rows(model, vol_hist, mspecs)
                _write(out / "volume_scatter.csv", to_csv(rows), written)
                lines.append(f"volume model: predicted vs observed correlation r = {_correlation(rows):.4f} "
                             f"over {len(rows)} points")
    elif not args.experiment:
        lines.append("no data: no log or experiment given")
    _write(out / "report.txt", "\n".join(lines).rstrip("\n") + "\n", written)
    _manifest(out, written, "report", args.seed)
    print("\n".join(lines))
    return EXIT_OK


# parser

def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d if suppress else 0, help="master seed (default 0)")
    p.add_argument("--config", default=d, help="run configuration JSON")
    p.add_argument("--out", default=d if suppress else "out", help="output directory (default ./out)")
    p.add_argument("--strict", action="store_true", default=d if suppress else False,
                   help="no smoothing; clamping warnings become errors")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dimbid", description="Multi-dimensional bid adjustment pipeline.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    p = add("simulate", "simulate a campaign and write its impression log")
    p.add_argument("--env", required=True, help="environment JSON")
    p.add_argument("--days", type=int)
    p.add_argument("--plan", help="fixed bid plan JSON (default: uniform at the base bid)")
    p.add_argument("--base-bid", type=float)
    p.add_argument("--spec", action="append", help="dimension groups for --explore")
    p.add_argument("--explore", type=float, default=0.0, help="log-normal sigma of random per-period factors")
    p.add_argument("--settle", action="store_true", help="include revenue attributed after the last day")
    p.add_argument("--attribution", action="store_true", help="add the attributed_day column")
    p.add_argument("--truth", help="where to keep the hidden truth (default: sibling of --out)")

    p = add("segment", "group dimension values into equal-volume buckets")
    p.add_argument("--log", required=True)
    p.add_argument("--dimension", action="append", help="NAME:GROUPS, repeatable")
    p.add_argument("--metric", choices=("rpm", "conversion_count", "order_count"))
    p.add_argument("--min-volume", type=int)
    p.add_argument("--min-orders", type=int)
    p.add_argument("--prefix", type=int)
    p.add_argument("--through-day", type=int, help="use only data seen by the end of this day")
    p.add_argument("--force", action="store_true", help="ignore the activation thresholds")

    p = add("evaluate", "distances, WOE, IV and mutual information of groupings")
    p.add_argument("--log", required=True)
    p.add_argument("--spec", action="append", required=True)
    p.add_argument("--lam", type=float)
    p.add_argument("--horizon", type=int)

    p = add("fit", "fit the CPM and volume landscape from a log and its plan history")
    p.add_argument("--log", required=True)
    p.add_argument("--plans", required=True, help="plan_history JSON")
    p.add_argument("--spec", action="append")

    p = add("optimize", "solve for the revenue-maximizing bid plan")
    p.add_argument("--model", required=True, help="landscape JSON")
    p.add_argument("--log", required=True, help="log for per-group RPM")
    p.add_argument("--spec", action="append")
    p.add_argument("--budget", type=float, help="daily budget")
    p.add_argument("--base-bid", type=float)

    p = add("experiment", "A/B experiment: optimizer against a uniform-factor control")
    p.add_argument("--env", required=True)
    p.add_argument("--replications", type=int)
    p.add_argument("--crn", dest="crn", action="store_true", default=None, help="common random numbers")
    p.add_argument("--no-crn", dest="crn", action="store_false")
    p.add_argument("--test", choices=("optimizer", "uniform"))
    p.add_argument("--control", choices=("optimizer", "uniform"))

    p = add("report", "summaries and plot data from logs, models and experiments")
    p.add_argument("--log")
    p.add_argument("--spec", action="append")
    p.add_argument("--model")
    p.add_argument("--plans")
    p.add_argument("--experiment", help="experiment output directory")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "segment": cmd_segment,
    "evaluate": cmd_evaluate,
    "fit": cmd_fit,
    "optimize": cmd_optimize,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            if args.strict:
                warnings.simplefilter("error")
            run = RunConfig.from_doc(docs.load(args.config)) if args.config else RunConfig()
            return COMMANDS[args.command](args, run)
    except UsageError as exc:
        print(f"dimbid {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"dimbid {args.command}: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DataError, LandscapeError, NotReadyError, UserWarning) as exc:
        print(f"dimbid {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DimbidError as exc:
        print(f"dimbid {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
