import csv
import json
import shutil
from pathlib import Path

import pytest

from feedcosim.cli import main
from feedcosim.config import ParseError, ValidationError, default_setup, dump_setup, load_setup, parse_setup, setup_to_dict

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def test_simulate_writes_outputs(tmp_path):
    out = tmp_path / "run"
    rc = main(["simulate", "--scenario", str(SCENARIOS / "default.json"), "--candidate", "SingleTranslatory",
               "--out", str(out), "--plot"])
    assert rc == 0
    assert sorted(p.name for p in out.iterdir()) == ["events.csv", "report.json", "trace.csv", "trajectory.svg"]
    with open(out / "trace.csv") as fh:
        assert next(csv.reader(fh)) == ["t_s", "x_m", "y_m", "heading_rad", "speed_m_s"]
    with open(out / "events.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t_s", "x_m", "y_m", "side", "amount_kg", "row", "candidate"]
    assert len(rows) == 11
    report = json.loads((out / "report.json").read_text())
    assert report["overall_pass"] is True
    assert (out / "trajectory.svg").read_text().startswith("<svg")


def test_simulate_demand_failure_exit_1(tmp_path):
    setup = default_setup()
    doc = setup_to_dict(setup)
    doc["controller"]["trigger_lead_m"] = 0.101
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    rc = main(["simulate", "--scenario", str(path), "--candidate", "SingleTranslatory", "--out", str(tmp_path / "o")])
    assert rc == 1
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["precision_ok"] is False and report["speed_ok"] and report["collision_ok"]


def test_simulate_dt_and_seed(tmp_path):
    rc = main(["simulate", "--scenario", str(SCENARIOS / "default.json"), "--candidate", "DoubleRotary",
               "--dt", "0.0005", "--seed", "7", "--out", str(tmp_path / "o")])
    assert rc == 0


@pytest.mark.parametrize("argv,code", [
    (["simulate", "--scenario", "/nonexistent.json", "--candidate", "SingleRotary", "--out", "x"], 2),
    (["report", "--in", "/nonexistent"], 2),
])
def test_io_errors_exit_2(argv, code, tmp_path):
    argv = [a if a != "x" else str(tmp_path / "x") for a in argv]
    assert main(argv) == code


def test_parse_error_exit_2(tmp_path):
    path = tmp_path / "s.json"
    path.write_text("{not json")
    assert main(["dse", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 2
    path.write_text(json.dumps({"scenario": {"rows": [], "start_pose_nominal": [0, 0, 0],
                                             "corridor_half_width_m": 0.6}}))
    assert main(["dse", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 2


def test_validation_error_exit_3(tmp_path):
    doc = setup_to_dict(default_setup())
    doc["scenario"]["corridor_half_width_m"] = 0.3
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    assert main(["simulate", "--scenario", str(path), "--candidate", "SingleRotary", "--out", str(tmp_path / "o")]) == 3
    assert main(["simulate", "--scenario", str(SCENARIOS / "default.json"), "--candidate", "Quad",
                 "--out", str(tmp_path / "o")]) == 3


def test_dse_and_report(tmp_path, capsys):
    out = tmp_path / "sweep"
    rc = main(["dse", "--scenario", str(SCENARIOS / "both_sides.json"), "--workers", "1", "--out", str(out)])
    assert rc == 0
    overview = json.loads((out / "overview.json").read_text())
    assert [c["id"] for c in overview["candidates"]] == ["SingleTranslatory", "DoubleTranslatory"]
    assert [c["pass"] for c in overview["candidates"]] == [False, True]
    with open(out / "overview.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["id", "pass_rate", "worst_abs_error_m", "max_speed_m_s", "min_clearance_m",
                       "dispenses_per_pass", "pass"]
    assert rows[2][-1] == "true" and rows[1][-1] == "false"
    assert len(list((out / "runs").iterdir())) == 2

    shutil.rmtree(out / "runs")
    capsys.readouterr()
    assert main(["report", "--in", str(out)]) == 0
    table = capsys.readouterr().out
    assert "DoubleTranslatory" in table and "PASS" in table and "FAIL" in table

    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["report", "--in", str(empty)]) == 2


def test_workers_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("COSIM_WORKERS", "1")
    doc = json.loads((SCENARIOS / "both_sides.json").read_text())
    doc["sweep"]["candidates"] = ["SingleTranslatory"]
    doc["scenario"]["rows"][0]["side"] = "Left"
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    assert main(["dse", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 0


def test_config_round_trip(tmp_path):
    setup = load_setup(SCENARIOS / "default.json")
    assert setup == default_setup()
    path = tmp_path / "full.json"
    dump_setup(setup, path)
    again = load_setup(path)
    assert again == setup
    assert setup_to_dict(again) == json.loads(path.read_text())


def test_config_rejects_unknown_keys():
    doc = setup_to_dict(default_setup())
    doc["vehicle"]["wings"] = 2
    with pytest.raises(ParseError):
        parse_setup(doc)
    doc = setup_to_dict(default_setup())
    doc["scenario"]["rows"][0]["colour"] = "red"
    with pytest.raises(ParseError):
        parse_setup(doc)


def test_config_type_errors():
    doc = setup_to_dict(default_setup())
    doc["controller"]["vision_guidance"] = "yes"
    with pytest.raises(ParseError):
        parse_setup(doc)
    doc = setup_to_dict(default_setup())
    doc["controller"]["cruise_speed_m_s"] = 0.3
    with pytest.raises(ValidationError):
        parse_setup(doc)


def test_duplicate_candidate_ids():
    doc = setup_to_dict(default_setup())
    doc["candidates"].append(doc["candidates"][0])
    with pytest.raises(ValidationError):
        parse_setup(doc)
