import json
import math
import shutil

import pytest

from dimbid import io as docs
from dimbid.cli import main
from dimbid.simulator import factorized_environment

HEADER = "day,impression_id,zip,site,device,hour,cost_micros,revenue_micros,converted"


@pytest.fixture(scope="module")
def env_file(tmp_path_factory):
    zips = {f"{10001 + 37 * i:05d}": {"conversion": math.exp(-0.6 + 0.3 * i), "volume": 1.0 + 0.1 * i}
            for i in range(5)}
    sites = {f"s{j}.com": {"conversion": math.exp(-0.4 + 0.4 * j), "price": 0.05 * j} for j in range(3)}
    env = factorized_environment({"zip": zips, "site": sites}, base_bid=2.0, opportunities=150.0,
                                 conversion_prob=0.02, competitor_mu=math.log(2.2), competitor_sigma=0.3,
                                 revenue_mu=math.log(5.0), revenue_sigma=0.5, attribution_delay=(0.6, 0.3, 0.1))
    doc = docs.environment_to_doc(env)
    doc["run"] = {
        "campaign": {"budget_per_period": 30.0, "flight_days": 12, "base_bid": 2.0, "adjustment_cadence_days": 2},
        "segmentation": [{"dimension": "zip", "group_count": 3, "min_volume_threshold": 50},
                         {"dimension": "site", "group_count": 2, "min_volume_threshold": 50}],
        "experiment": {"replications": 2},
        "pipeline": {"first_group_day": 4},
    }
    path = tmp_path_factory.mktemp("env") / "env.json"
    docs.dump(doc, path)
    return path


@pytest.fixture(scope="module")
def simulated(env_file, tmp_path_factory):
    root = tmp_path_factory.mktemp("sim")
    out = root / "sim"
    assert main(["--seed", "3", "--out", str(out), "simulate", "--env", str(env_file)]) == 0
    return out


def test_simulate_writes_log_and_hides_truth(simulated):
    lines = (simulated / "log.csv").read_text().splitlines()
    assert lines[0] == HEADER and len(lines) > 100
    manifest = json.loads((simulated / "manifest.json").read_text())
    assert sorted(manifest["files"]) == ["log.csv", "plans.json", "simulate.json"]
    assert not any("truth" in f for f in manifest["files"])
    assert "opportunities" not in (simulated / "log.csv").read_text()
    truth = simulated.parent / "sim_truth" / "truth.json"
    assert json.loads(truth.read_text())["kind"] == "hidden_truth"


def test_segment_fit_optimize_pipeline_without_truth(env_file, tmp_path):
    sim = tmp_path / "sim"
    assert main(["--seed", "4", "--out", str(sim), "simulate", "--env", str(env_file),
                 "--spec", "/dev/null"]) != 0  # an unreadable spec is a data error
    seg = tmp_path / "seg"
    assert main(["--out", str(sim), "simulate", "--env", str(env_file)]) == 0
    assert main(["--out", str(seg), "segment", "--log", str(sim / "log.csv"),
                 "--dimension", "zip:3", "--dimension", "site:2", "--min-volume", "10"]) == 0
    explored = tmp_path / "explored"
    specs = ["--spec", str(seg / "spec_zip.json"), "--spec", str(seg / "spec_site.json")]
    assert main(["--seed", "1", "--out", str(explored), "simulate", "--env", str(env_file), "--explore", "0.3",
                 *specs]) == 0
    shutil.rmtree(tmp_path / "explored_truth")
    shutil.rmtree(tmp_path / "sim_truth")
    fit = tmp_path / "fit"
    assert main(["--out", str(fit), "fit", "--log", str(explored / "log.csv"),
                 "--plans", str(explored / "plans.json"), *specs]) == 0
    model = json.loads((fit / "landscape.json").read_text())
    assert model["kind"] == "landscape_model" and model["observations"] >= 10
    opt = tmp_path / "opt"
    assert main(["--config", str(_run_config(tmp_path)), "--out", str(opt), "optimize",
                 "--model", str(fit / "landscape.json"), "--log", str(explored / "log.csv"),
                 "--budget", "10"]) == 0
    plan = docs.bid_plan_from_doc(json.loads((opt / "plan.json").read_text()))
    assert [s.name for s in plan.dimensions] == ["zip", "site"]
    assert main(["--out", str(tmp_path / "ev"), "evaluate", "--log", str(explored / "log.csv"), *specs]) == 0
    assert json.loads((tmp_path / "ev" / "evaluation.json").read_text())["pairs"][0]["mutual_information"] >= 0
    # a tiny budget pushes this fit into negative predicted volume: flagged, fatal under --strict
    starved = ["optimize", "--model", str(fit / "landscape.json"), "--log", str(explored / "log.csv"),
               "--budget", "1e-6"]
    with pytest.warns(UserWarning, match="negative volume"):
        assert main(["--out", str(tmp_path / "opt2"), *starved]) == 0
    flagged = json.loads((tmp_path / "opt2" / "plan.json").read_text())["diagnostics"]["negative_volume_groups"]
    assert flagged
    assert main(["--strict", "--out", str(tmp_path / "opt3"), *starved]) == 2
    # with non-negative volumes a budget below the floor spend is a solver failure
    model["volume"]["intercepts"] = [0.0, 0.0]
    docs.dump(model, tmp_path / "clean.json")
    assert main(["--out", str(tmp_path / "opt4"), "optimize", "--model", str(tmp_path / "clean.json"),
                 "--log", str(explored / "log.csv"), "--budget", "1e-6"]) == 3


def _run_config(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps({"solver": {"bounds": [0.5, 2.0]}}))
    return p


def test_usage_errors_exit_1(simulated, capsys):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["segment", "--log", str(simulated / "log.csv")]) == 1
    assert main(["segment", "--log", str(simulated / "log.csv"), "--dimension", "zip"]) == 1


def test_data_errors_exit_2(simulated, tmp_path):
    assert main(["segment", "--log", str(tmp_path / "missing.csv"), "--dimension", "zip:2"]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text(HEADER + "\n0,x,1,a,d,1,-4,0,0\n")
    assert main(["--out", str(tmp_path), "segment", "--log", str(bad), "--dimension", "zip:1"]) == 2
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{oops")
    assert main(["--config", str(cfg), "segment", "--log", str(bad), "--dimension", "zip:1"]) == 2
    # thresholds not met without --force
    assert main(["--out", str(tmp_path / "s"), "segment", "--log", str(simulated / "log.csv"),
                 "--dimension", "zip:3", "--min-volume", "1000000"]) == 2
    assert main(["--out", str(tmp_path / "s"), "segment", "--log", str(simulated / "log.csv"),
                 "--dimension", "zip:3", "--min-volume", "1000000", "--force"]) == 0


def test_report_on_empty_log(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text(HEADER + "\n")
    assert main(["--out", str(tmp_path / "rep"), "report", "--log", str(empty)]) == 0
    assert "no data" in capsys.readouterr().out
    assert "no data" in (tmp_path / "rep" / "report.txt").read_text()


def test_experiment_is_byte_identical_across_runs(env_file, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["--seed", "9", "--out", str(out), "experiment", "--env", str(env_file),
                     "--replications", "1"]) == 0
        outs.append(out)
    files = json.loads((outs[0] / "manifest.json").read_text())["files"]
    assert "summary.txt" in files and "replications.csv" in files
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f
    rep = tmp_path / "rep"
    assert main(["--out", str(rep), "report", "--experiment", str(outs[0])]) == 0
    assert "median ROAS delta" in (rep / "report.txt").read_text()


def test_control_versus_control_is_a_null_run(env_file, tmp_path):
    out = tmp_path / "null"
    assert main(["--out", str(out), "experiment", "--env", str(env_file), "--test", "uniform",
                 "--control", "uniform", "--crn"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["median_roas_delta"] == 0 and summary["positive_roas"] == 0
    assert summary["sign_test_pvalue"] == 1.0
