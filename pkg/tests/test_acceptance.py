"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line (with timing) that the conftest hook
prints at the end of the session; run this file alone with
``pytest tests/test_acceptance.py``.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from dimbid import io as docs
from dimbid.cli import main
from dimbid.core import BidPlan, DimensionSpec, ImpressionLog, ImpressionRecord
from dimbid.evaluation import GroupShareTable, entropy, information_value, modified_woe, mutual_information
from dimbid.evaluation import DistanceConfig, crossover_ratio, pairwise_distance
from dimbid.landscape import FitSettings, MarginalVolumeModel, VolumeData, fit_volume_marginal, objective_and_gradient
from dimbid.optimizer import DisjointInstance, solve_disjoint, solve_overlapping
from dimbid.segmentation import GroupingRequest, build_groups, summarize_values
from dimbid.simulator import run_day

from oracles import central_difference, disjoint_grid_oracle, grid_oracle_2x2, marginal_volumes
from test_optimizer import make_instance, parts

ROOT = Path(__file__).resolve().parents[1]
ENV = ROOT / "configs" / "two_dim.env"
RESULTS = []


def record(n, title, ok, seconds, detail=""):
    RESULTS.append(f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'} {title} [{seconds:.1f}s] {detail}".rstrip())
    assert ok, RESULTS[-1]


def test_1_disjoint_closed_form_vs_grid():
    rng = np.random.default_rng(2024)
    solve_time = 0.0
    worst_factor = worst_spend = 0.0
    for _ in range(100):
        m = int(rng.integers(1, 7))
        rpm, beta, B = rng.uniform(0.5, 40, m), rng.uniform(0.2, 8, m), float(rng.uniform(1, 80))
        t = time.perf_counter()
        sol = solve_disjoint(DisjointInstance(rpm, beta, B))
        solve_time += time.perf_counter() - t
        oracle = disjoint_grid_oracle(rpm, beta, B)
        worst_factor = max(worst_factor, float(np.max(np.abs(sol.factors - oracle))))
        worst_spend = max(worst_spend, abs(sol.spend - B) / B)
    ok = worst_factor <= 1e-2 and worst_spend <= 1e-9 and solve_time < 10
    record(1, "closed-form disjoint solver", ok, solve_time,
           f"max |f - grid| {worst_factor:.2e}, max spend rel err {worst_spend:.1e}")


def test_2_overlapping_solver_vs_dense_grid():
    rng = np.random.default_rng(77)
    solve_time = oracle_time = 0.0
    worst = np.inf
    for i in range(25):
        inst = make_instance(rng, (2, 2), bounds=(0.5, 1.5))
        t = time.perf_counter()
        sol = solve_overlapping(inst, seed=i)
        solve_time += time.perf_counter() - t
        t = time.perf_counter()
        best, _ = grid_oracle_2x2(*parts(inst), inst.budget, 0.5, 1.5, step=0.01)
        oracle_time += time.perf_counter() - t
        assert sol.spend <= inst.budget * (1 + 1e-6)
        worst = min(worst, sol.revenue / best)
    ok = worst >= 0.99 and solve_time < 120
    record(2, "overlapping solver vs 4-D grid (box 0.5..1.5, step 0.01)", ok, solve_time,
           f"worst solver/grid revenue {worst:.5f}; grid took {oracle_time:.1f}s")


def test_3_landscape_identifiability_and_gradient():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    shape = (3, 3)
    betas = (rng.uniform(50, 500, 3), rng.dirichlet(np.ones(3)))
    truth = MarginalVolumeModel(rng.uniform(0, 30, 2), betas)
    plans = [tuple(rng.uniform(0.5, 2.0, s) for s in shape) for _ in range(10)]
    history = [(p, [np.array(v) for v in marginal_volumes(truth.intercepts, truth.betas, p)]) for p in plans]
    fitted = fit_volume_marginal(history, FitSettings(seed=0))
    worst_pred = 0.0
    for _ in range(50):
        p = tuple(rng.uniform(0.5, 2.0, s) for s in shape)
        want = np.concatenate(marginal_volumes(truth.intercepts, truth.betas, p))
        worst_pred = max(worst_pred, float(np.max(np.abs(np.concatenate(fitted.predict(p)) - want) / want)))

    data = VolumeData([(p, [v * rng.uniform(0.9, 1.1, len(v)) for v in vols]) for p, vols in history])
    worst_grad = 0.0
    for _ in range(20):
        theta = np.concatenate([rng.uniform(0, 20, 2), rng.uniform(0.1, 2, 3), rng.uniform(0.1, 2, 3)])
        _, g = objective_and_gradient(theta, data)
        fd = central_difference(lambda th: objective_and_gradient(th, data)[0], theta, h=1e-5)
        worst_grad = max(worst_grad, float(np.max(np.abs(g - fd)) / np.max(np.abs(fd))))
    ok = worst_pred <= 1e-6 and worst_grad <= 1e-5
    record(3, "landscape fit identifiability and gradient", ok, time.perf_counter() - t0,
           f"held-out rel err {worst_pred:.1e}, gradient rel err {worst_grad:.1e}")


def _random_log(rng, n_values):
    rows = []
    for v in range(n_values):
        vol = int(rng.integers(1, 60))
        p = rng.uniform(0, 0.2)
        for i in range(vol):
            conv = rng.random() < p
            rows.append(ImpressionRecord(int(rng.integers(0, 10)), f"{v}-{i}", {"site": f"v{v:03d}"},
                                         int(rng.integers(500, 3000)), int(rng.integers(1, 10**7)) if conv else 0,
                                         conv))
    return ImpressionLog.from_records(rows)


def test_4_segmentation_balance_order_permutation():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    failures = []
    for trial in range(30):
        log = _random_log(rng, int(rng.integers(50, 150)))
        groups = int(rng.integers(2, 9))
        metric = ("rpm", "conversion_count", "order_count")[trial % 3]
        req = GroupingRequest("site", groups, metric, 0, 0)
        spec = build_groups(log, req)
        s = summarize_values(log, "site")
        vol = dict(zip(s.values, s.volume.tolist()))
        key = dict(zip(s.values, s.metric(metric).tolist()))
        gvol = np.zeros(groups)
        for v, g in spec.group_of.items():
            gvol[g] += vol[v]
        if gvol.max() - gvol.min() > max(vol.values()):
            failures.append(f"trial {trial}: imbalance")
        for g in range(groups - 1):
            if max(key[v] for v in spec.members(g)) > min(key[v] for v in spec.members(g + 1)):
                failures.append(f"trial {trial}: order")
        if build_groups(log.take(rng.permutation(len(log))), req) != spec:
            failures.append(f"trial {trial}: permutation")
    record(4, "segmentation balance, order and permutation invariance", not failures,
           time.perf_counter() - t0, "; ".join(failures[:3]) or "30 random logs, 50..149 values")


def test_5_metric_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    problems = []
    for _ in range(1000):
        groups = int(rng.integers(1, 9))
        conv, imp = rng.integers(0, 50, groups), rng.integers(0, 500, groups)
        imp = np.maximum(imp, conv)
        if information_value(GroupShareTable.from_counts(conv, imp, epsilon=0.5)) < 0:
            problems.append("IV < 0")
        table = rng.integers(0, 30, (int(rng.integers(1, 6)), int(rng.integers(1, 6)), 2)).astype(float)
        if table.sum() and mutual_information(table) < 0:
            problems.append("MI < 0")
    worst_ind = worst_det = 0.0
    for _ in range(50):
        pair = rng.integers(1, 40, (int(rng.integers(2, 6)), int(rng.integers(2, 6)))).astype(float)
        y = rng.integers(1, 10, 2).astype(float)
        worst_ind = max(worst_ind, abs(mutual_information(pair[:, :, None] * y)))
        det = np.zeros(pair.shape + (2,))
        label = rng.integers(0, 2, pair.shape)
        det[np.arange(pair.shape[0])[:, None], np.arange(pair.shape[1]), label] = pair
        worst_det = max(worst_det, abs(mutual_information(det) - entropy(det.sum(axis=(0, 1)))))
    if worst_ind > 1e-12 or worst_det > 1e-12:
        problems.append(f"independence {worst_ind:.1e}, determinism {worst_det:.1e}")

    hand = [
        crossover_ratio([2, 2, 2, 2], [1, 1, 1, 1]) == 5.0,
        crossover_ratio([1, 2, 3], [1, 2, 3]) == 1 / 4,
        crossover_ratio([2, 0, 2, 2], [1, 1, 1, 1]) == 2.0,
        pairwise_distance([1, 2, 3, 4, 5], [1, 2, 3, 4, 5], DistanceConfig(lam=0, horizon=5)) == 0,
        pairwise_distance([1, 2, 3, 4, 5], [1, 2, 3, 4, 5], DistanceConfig(lam=1, horizon=5)) == 6 / 5,
        pairwise_distance([1.5, 2.0, 5.0], [0.5, 1.0, 4.0], DistanceConfig(lam=0, horizon=3)) == 3.0,
        modified_woe(GroupShareTable(np.array([0.2, 0.8]), np.array([0.1, 0.9]), 0.0))[0] == np.log(2.0) * 100,
        modified_woe(GroupShareTable(np.array([0.5, 0.5]), np.array([0.25, 0.75]), 0.0)).tolist()
        == [np.log(2.0) * 100, np.log(2 / 3) * 100],
        information_value(GroupShareTable(np.array([0.8, 0.2]), np.array([0.5, 0.5]), 0.0))
        == (0.8 - 0.5) * np.log(0.8 / 0.5) + (0.2 - 0.5) * np.log(0.2 / 0.5),
    ]
    if not all(hand):
        problems.append(f"hand examples {hand}")
    record(5, "IV/MI properties and hand examples", not problems, time.perf_counter() - t0,
           "; ".join(problems[:3]) or f"1000 tables, independence {worst_ind:.1e}, determinism {worst_det:.1e}")


def truth_group_rpm(env, spec):
    """Expected RPM of each group at the base bid: cell RPMs weighted by expected wins."""
    num = np.zeros(spec.group_count)
    den = np.zeros(spec.group_count)
    for c in env.cells:
        g = spec.group_index(c.features[spec.name])
        if g >= spec.group_count:
            continue
        wins = c.daily_opportunities * float(c.competitor_bid.cdf(env.base_bid))
        num[g] += wins * c.conversion_prob * c.revenue.mean() * 1000.0
        den[g] += wins
    return num / den


@pytest.fixture(scope="module")
def experiment_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance") / "experiment"
    t0 = time.perf_counter()
    code = main(["--seed", "0", "--out", str(out), "experiment", "--env", str(ENV)])
    return out, code, time.perf_counter() - t0


def test_6_end_to_end_ab(experiment_run):
    out, code, seconds = experiment_run
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    env = docs.environment_from_doc(docs.load(ENV))
    groups = docs.load(out / "groups.json")["dimensions"]
    ratios = {}
    for g in groups:
        spec = docs.dimension_spec_from_doc(g)
        rpm = truth_group_rpm(env, spec)
        ratios[spec.name] = float(rpm.max() / rpm.min())
    med = summary["median_replication"]
    checks = {
        "truth separation >= 2x": all(r >= 2.0 for r in ratios.values()),
        "median ROAS delta > 0": summary["median_roas_delta"] > 0,
        ">= 16/20 positive": summary["positive_roas"] >= 16 and summary["replications"] == 20,
        "median replication eCPM not higher": med["ecpm_delta"] <= 0,
        "runtime < 5 min": seconds < 300,
    }
    failed = [k for k, v in checks.items() if not v]
    detail = (f"median ROAS delta {summary['median_roas_delta']:+.4f}, positive {summary['positive_roas']}/"
              f"{summary['replications']}, sign p {summary['sign_test_pvalue']:.2g}, median-replication eCPM "
              f"delta {med['ecpm_delta']:+.4f}, truth RPM best/worst "
              + ", ".join(f"{k} {v:.2f}x" for k, v in ratios.items()))
    if failed:
        detail += "; failed: " + ", ".join(failed)
    record(6, "end-to-end A/B, optimizer vs uniform", not failed, seconds, detail)


def test_7_simulator_assumptions():
    t0 = time.perf_counter()
    env = docs.environment_from_doc(docs.load(ENV))
    sites = env.levels()["site"]
    spec = DimensionSpec("site", {s: i // 3 for i, s in enumerate(sites)}, 4)
    target = 2

    def plan(f):
        row = [1.0, 1.0, 1.0, 1.0]
        row[target] = f
        return BidPlan(env.base_bid, (tuple(row),), (spec,))

    strict = True
    low_rev, high_rev = [], []
    for seed in range(10):
        e = env.with_seed(seed)
        lo, hi = run_day(e, plan(0.8), 0), run_day(e, plan(1.2), 0)
        members = np.array([spec.group_index(c.features["site"]) == target for c in env.cells])
        strict &= int(hi.truth.wins[members].sum()) > int(lo.truth.wins[members].sum())
        for day, bucket in ((lo, low_rev), (hi, high_rev)):
            in_group = np.asarray(day.log.features["site"].values())
            mask = np.isin(in_group, spec.members(target))
            bucket.append(day.log.revenue_micros[mask] / 1e6)
    lo_x, hi_x = np.concatenate(low_rev), np.concatenate(high_rev)
    rpm_lo, rpm_hi = 1000 * lo_x.mean(), 1000 * hi_x.mean()
    se = 1000 * lo_x.std(ddof=1) / np.sqrt(len(lo_x))
    ok = strict and abs(rpm_hi - rpm_lo) <= 3 * se
    record(7, "simulator: wins rise with the factor, RPM unchanged", ok, time.perf_counter() - t0,
           f"wins strictly up in all seeds: {bool(strict)}; RPM {rpm_lo:.2f} -> {rpm_hi:.2f} (3 SE = {3 * se:.2f})")


def test_8_experiment_determinism(experiment_run, tmp_path):
    first, code, _ = experiment_run
    assert code == 0
    t0 = time.perf_counter()
    second = tmp_path / "again"
    assert main(["--seed", "0", "--out", str(second), "experiment", "--env", str(ENV)]) == 0
    files = json.loads((first / "manifest.json").read_text())["files"] + ["manifest.json"]
    differ = [f for f in files if (first / f).read_bytes() != (second / f).read_bytes()]
    record(8, "experiment output byte-identical on rerun", not differ, time.perf_counter() - t0,
           f"{len(files)} files compared" + (f"; differ: {differ}" if differ else ""))
