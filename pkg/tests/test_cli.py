from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from netdesign.cli import cumulative_solved, main, read_benchmark_csv, run_benchmark, summarize
from netdesign.instances import load_instance, save_instance
from netdesign.network import Scenario

FIXTURES = Path(__file__).parent / "data" / "fixtures"


@pytest.fixture
def toy_file(tmp_path):
    path = tmp_path / "toy.json"
    assert main(["toy", "--seed", "3", "--removable", "4", "-o", str(path)]) == 0
    return path


@pytest.mark.parametrize("mode", ["ifw", "penalty", "benders"])
def test_solve_modes(toy_file, tmp_path, mode, capsys):
    result = tmp_path / f"{mode}.json"
    events = tmp_path / f"{mode}.csv"
    rc = main(["solve", "--instance", str(toy_file), "--mode", mode, "--time-limit", "60",
               "--result", str(result), "--events", str(events)])
    rec = json.loads(result.read_text())
    assert rc == (0 if rec["solved"] else 2)
    assert rec["mode"] == mode and len(rec["design"]) == 4
    if mode == "penalty":
        assert rec["violation"] <= 0.01 or not rec["solved"]
    with open(events) as fh:
        assert next(csv.reader(fh)) == ["time_s", "event", "value"]
    assert "wall_time_s=" in capsys.readouterr().out


def test_single_scenario_matches_deterministic(toy_file, tmp_path):
    inst = load_instance(toy_file)
    one = tmp_path / "one.json"
    save_instance(inst.with_scenarios([Scenario(1.0, inst.demand)]), one)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["solve", "--instance", str(toy_file), "--result", str(a)])
    main(["solve", "--instance", str(one), "--result", str(b)])
    ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
    assert ra["design"] == rb["design"]
    assert abs(ra["objective"] - rb["objective"]) <= 1e-12


def test_result_json_reproducible(toy_file, tmp_path):
    outs = []
    for k in range(2):
        path = tmp_path / f"r{k}.json"
        main(["solve", "--instance", str(toy_file), "--mode", "benders", "--scenarios", "2", "--seed", "7",
              "--result", str(path)])
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_config_file_and_out_dir(toy_file, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"instance": str(toy_file), "mode": "ifw", "gap": 0.01, "out_dir": str(tmp_path / "o")}))
    assert main(["solve", "--config", str(cfg)]) in (0, 2)
    assert (tmp_path / "o" / "toy_ifw_result.json").exists()
    assert (tmp_path / "o" / "toy_ifw_events.csv").exists()


@pytest.mark.parametrize("payload", [{"mode": "nope"}, {"gap": 0.0}, {"bogus": 1}, {"time_limit": -1}])
def test_bad_config_is_error(toy_file, tmp_path, payload):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"instance": str(toy_file), **payload}))
    assert main(["solve", "--config", str(cfg)]) == 1


def test_missing_instance_is_error(tmp_path, capsys):
    assert main(["solve"]) == 1
    assert main(["solve", "--instance", str(tmp_path / "none.json")]) == 1
    assert "error:" in capsys.readouterr().err


def test_generate_from_tntp(tmp_path, capsys):
    out = tmp_path / "inst.json"
    rc = main(["generate", "--net", str(FIXTURES / "tiny_net.tntp"), "--trips", str(FIXTURES / "tiny_trips.tntp"),
               "--fraction", "0.2", "--scenarios", "3", "--seed", "1", "-o", str(out)])
    assert rc == 0
    inst = load_instance(out)
    assert inst.num_removable == 1 and len(inst.scenarios) == 3
    assert "|R|=1" in capsys.readouterr().out
    meta = json.loads(out.read_text())["meta"]
    assert meta["net"] == "tiny_net.tntp"


def test_generate_too_small_fraction_is_error(tmp_path):
    rc = main(["generate", "--net", str(FIXTURES / "tiny_net.tntp"), "--trips", str(FIXTURES / "tiny_trips.tntp"),
               "--fraction", "0.01", "-o", str(tmp_path / "x.json")])
    assert rc == 1


def test_empty_benchmark_matrix_is_error(tmp_path):
    matrix = tmp_path / "m.json"
    matrix.write_text(json.dumps({"instances": []}))
    assert main(["benchmark", "--matrix", str(matrix)]) == 1


def test_benchmark_single_run_curve(tmp_path):
    matrix = tmp_path / "m.json"
    matrix.write_text(json.dumps({"instances": [{"toy": {"seed": 2, "removable": 3}}], "modes": ["ifw"],
                                  "time_limit": 60}))
    assert main(["benchmark", "--matrix", str(matrix), "-o", str(tmp_path / "bench")]) == 0
    rows = read_benchmark_csv(tmp_path / "bench_runs.csv")
    assert len(rows) == 1 and rows[0]["solved"] and rows[0]["error"] == ""
    with open(tmp_path / "bench_cumulative.csv") as fh:
        curve = list(csv.DictReader(fh))
    assert len(curve) == 1 and curve[0]["solved"] == "1"
    assert float(curve[0]["time_s"]) == pytest.approx(rows[0]["time_s"])


def test_benchmark_records_failures():
    rows = run_benchmark({"instances": ["/nonexistent.json"], "modes": ["ifw"]})
    assert rows[0]["status"] == "error" and "FileNotFoundError" in rows[0]["error"]
    assert summarize(rows) == {("ifw", None): 0} and cumulative_solved(rows) == []


def test_cumulative_curve_is_monotone():
    rows = [{"mode": "ifw", "scenarios": 1, "solved": True, "time_s": t} for t in (3.0, 1.0, 2.0)]
    rows.append({"mode": "ifw", "scenarios": 1, "solved": False, "time_s": None})
    curve = cumulative_solved(rows)
    assert [c["time_s"] for c in curve] == [1.0, 2.0, 3.0] and [c["solved"] for c in curve] == [1, 2, 3]
