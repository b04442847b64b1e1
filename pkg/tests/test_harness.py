import csv
import json

import numpy as np
import pytest

from uavplan import harness
from uavplan.cli import main
from uavplan.config import ConfigError, ENVIRONMENTS, SystemParams, save_config

URBAN = ENVIRONMENTS["urban"]
SMALL = SystemParams(n_users=8)


def test_outage_examples():
    curve = dict(harness.outage_curve([1.0, 2.0, 3.0], [0.5, 2.5, 3.0, 3.5]))
    assert curve == {0.5: 0.0, 2.5: pytest.approx(2 / 3), 3.0: pytest.approx(2 / 3), 3.5: 1.0}
    with pytest.raises(ValueError):
        harness.outage_curve([])


def test_outage_nondecreasing(rng):
    se = rng.exponential(1.0, 50)
    p = [v for _, v in harness.outage_curve(se)]
    assert np.all(np.diff(p) >= 0)
    assert p[0] == 0.0


def test_unknown_scheme():
    with pytest.raises(ConfigError):
        harness.run_pipeline(SMALL, URBAN, "magic", 0)


@pytest.fixture(scope="module")
def proposed_run():
    harness._CACHE.clear()
    return harness.run_pipeline(SMALL, URBAN, "proposed", 1)


def test_run_row_complete(proposed_run):
    r = proposed_run.row
    assert r["status"] == "ok" and r["reason"] == ""
    assert set(r) == set(harness.METRIC_COLUMNS)
    assert r["sum_rate"] > 0 and r["qos_violations"] == 0
    assert r["max_violation"] <= 1e-6
    assert sum(float(v) for v in r["per_uav_rates"].split(";")) == pytest.approx(r["sum_rate"])
    assert proposed_run.traces["alg1_pathloss_db"]
    assert proposed_run.traces["alg2_objective"]


def test_run_deterministic(proposed_run):
    harness._CACHE.clear()
    again = harness.run_pipeline(SMALL, URBAN, "proposed", 1)
    skip = {"t_fleet", "t_deploy", "t_alloc", "t_total"}
    assert {k: v for k, v in again.row.items() if k not in skip} == \
        {k: v for k, v in proposed_run.row.items() if k not in skip}


def test_failed_stage_becomes_row():
    # two k-means UAVs cannot meet QoS for these eight users
    res = harness.run_pipeline(SMALL, URBAN, "kmeans", 1)
    assert res.row["status"] == "failed"
    assert res.row["reason"].startswith("allocation:")
    assert res.row["sum_rate"] == ""
    assert res.row["avg_pathloss_db"] != ""


def test_deployment_only():
    res = harness.run_pipeline(SMALL, URBAN, "random_deployment", 2, allocate=False)
    assert res.row["status"] == "ok"
    assert res.row["sum_rate"] == "" and res.alloc is None
    assert np.isfinite(res.row["avg_pathloss_db"])


def test_metrics_round_trip(tmp_path, proposed_run):
    bad = harness.run_pipeline(SMALL, URBAN, "kmeans", 1).row
    harness.write_metrics([proposed_run.row, bad], tmp_path / "m.csv")
    back = harness.read_metrics(tmp_path / "m.csv")
    assert back[0] == proposed_run.row
    assert back[1] == bad
    with open(tmp_path / "m.csv", encoding="utf-8") as fh:
        assert next(csv.reader(fh)) == harness.METRIC_COLUMNS


def test_trace_and_plan_files(tmp_path, proposed_run):
    harness.write_trace(proposed_run, tmp_path / "t.csv")
    rows = list(csv.DictReader(open(tmp_path / "t.csv", encoding="utf-8")))
    assert {r["stage"] for r in rows} == {"alg1_pathloss_db", "alg2_objective"}
    harness.write_plan(proposed_run, tmp_path / "p.json")
    d = json.loads((tmp_path / "p.json").read_text())
    assert d["row"]["seed"] == 1
    assert len(d["deployment"]["uavs"]) == proposed_run.row["L"]
    A = proposed_run.alloc.A
    assert len(d["allocation"]["entries"]) == int((A > 0).sum())


def test_sweep_cell_equals_run(tmp_path, proposed_run):
    rows, summary = harness.sweep(SMALL, URBAN, "N", ["8"], [1], out_dir=tmp_path)
    skip = {"t_fleet", "t_deploy", "t_alloc", "t_total"}
    assert {k: v for k, v in rows[0].items() if k not in skip} == \
        {k: v for k, v in proposed_run.row.items() if k not in skip}
    assert summary[0]["runs"] == 1 and summary[0]["failures"] == 0
    assert (tmp_path / "metrics.csv").exists() and (tmp_path / "summary.csv").exists()
    assert (tmp_path / "trace_proposed_8_1.csv").exists()
    assert (tmp_path / "plan_proposed_8_1.json").exists()


def test_sweep_scheme_axis_counts_failures():
    rows, summary = harness.sweep(SMALL, URBAN, "scheme", ["kmeans", "equal_power"], [1])
    by = {s["value"]: s for s in summary}
    assert by["kmeans"]["failures"] == 1
    assert by["equal_power"]["failures"] == 0
    assert np.isnan(by["kmeans"]["sum_rate_mean"])


def test_sweep_bad_axis_and_value():
    with pytest.raises(ConfigError):
        harness.sweep(SMALL, URBAN, "bandwidth", [1], 1)
    with pytest.raises(ConfigError):
        harness.sweep(SMALL, URBAN, "environment", ["mars"], 1)


def test_summary_stats():
    rows = [{"N": 5, "scheme": "s", "status": "ok", "avg_pathloss_db": v, "sum_rate": 2 * v,
             "L": 1, "served_fraction": 1.0} for v in (1.0, 2.0, 3.0)]
    rows.append(dict(rows[0], status="failed"))
    (s,) = harness.summarize(rows, "N")
    assert s["runs"] == 4 and s["failures"] == 1
    assert s["avg_pathloss_db_mean"] == 2.0
    assert s["avg_pathloss_db_stderr"] == pytest.approx(1 / np.sqrt(3))


# --------------------------------------------------------------------------
# command line


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.toml"
    save_config(path, SMALL, URBAN)
    return path


def test_cli_run_ok(tmp_path, small_cfg, capsys):
    rc = main(["run", "--config", str(small_cfg), "--scheme", "equal_power", "--seed", "1",
               "--out", str(tmp_path / "o")])
    assert rc == 0
    for name in ("metrics.csv", "trace_1.csv", "plan_1.json"):
        assert (tmp_path / "o" / name).exists()
    assert "equal_power seed=1" in capsys.readouterr().out


def test_cli_run_partial_failure(tmp_path, small_cfg):
    rc = main(["run", "--config", str(small_cfg), "--scheme", "kmeans", "--seed", "1",
               "--out", str(tmp_path)])
    assert rc == 2
    assert harness.read_metrics(tmp_path / "metrics.csv")[0]["status"] == "failed"


def test_cli_config_errors(tmp_path, small_cfg):
    bad = tmp_path / "bad.toml"
    bad.write_text("h_min = 100\nh_max = 20\n")
    assert main(["run", "--config", str(bad)]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == 1
    assert main(["run", "--config", str(small_cfg), "--scheme", "nope"]) == 1
    with pytest.raises(SystemExit) as ex:
        main(["run", "--seed", str(2 ** 64)])
    assert ex.value.code == 1
    with pytest.raises(SystemExit) as ex:
        main(["sweep", "--axis", "bogus", "--values", "1"])
    assert ex.value.code == 1
    assert main(["sweep", "--config", str(small_cfg), "--axis", "N", "--values", ",",
                 "--out", str(tmp_path)]) == 1


def test_cli_sweep(tmp_path, small_cfg):
    rc = main(["sweep", "--config", str(small_cfg), "--axis", "scheme",
               "--values", "equal_power,kmeans", "--seeds", "1", "--seed0", "1",
               "--out", str(tmp_path)])
    assert rc == 2
    rows = harness.read_metrics(tmp_path / "metrics.csv")
    assert [r["scheme"] for r in rows] == ["equal_power", "kmeans"]
    rc = main(["sweep", "--config", str(small_cfg), "--axis", "scheme",
               "--values", "equal_power", "--seeds", "1", "--seed0", "1",
               "--out", str(tmp_path / "ok")])
    assert rc == 0
