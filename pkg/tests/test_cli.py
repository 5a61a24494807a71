import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from rsmu_sim.cli import main

ROOT = Path(__file__).resolve().parents[1]
DEMO = ROOT / "scenarios" / "demo.json"


def _scenario(tmp_path, **cfg):
    base = {"seed": 3, "duration_s": 20, "geometry": {"mainline_length": 6000}}
    base.update(cfg)
    p = tmp_path / "s.json"
    p.write_text(json.dumps(base))
    return p


def test_plan_6km(tmp_path, capsys):
    out = tmp_path / "plan.json"
    assert main(["plan", "--scenario", str(_scenario(tmp_path)), "--out", str(out)]) == 0
    plan = json.loads(out.read_text())
    assert len(plan["order"]["east"]) == 6 and len(plan["order"]["west"]) == 6


def test_plan_gap_exits_1(tmp_path, capsys):
    s = _scenario(tmp_path, geometry={"mainline_length": 4000}, deployment={"stations": [0, 2000, 4000]})
    assert main(["plan", "--scenario", str(s)]) == 1
    assert "uncovered east" in capsys.readouterr().err


def test_missing_file_exits_2(tmp_path):
    assert main(["plan", "--scenario", str(tmp_path / "nope.json")]) == 2
    assert main(["run", "--scenario", str(tmp_path / "nope.json")]) == 2


def test_bad_flags_exit_2():
    assert main(["run"]) == 2


def test_validate(tmp_path):
    assert main(["validate", "--scenario", str(_scenario(tmp_path))]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"duration_s": 1}))
    assert main(["validate", "--scenario", str(bad)]) == 2


@pytest.fixture(scope="module")
def demo_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("demo")
    a, b = d / "a.json", d / "b.json"
    for out in (a, b):
        assert main(["run", "--scenario", str(DEMO), "--seed", "42", "--out", str(out)]) == 0
    return d


def test_run_writes_report_and_log(demo_run):
    assert (demo_run / "a.json").exists() and (demo_run / "a.log.jsonl").exists()
    assert json.loads((demo_run / "a.json").read_text())["seed"] == 42


def test_run_is_byte_identical(demo_run):
    assert (demo_run / "a.json").read_bytes() == (demo_run / "b.json").read_bytes()
    assert (demo_run / "a.log.jsonl").read_bytes() == (demo_run / "b.log.jsonl").read_bytes()


def test_csv_matches_json(demo_run):
    out = demo_run / "c.csv"
    assert main(["run", "--scenario", str(DEMO), "--seed", "42", "--out", str(out), "--format", "csv"]) == 0
    rows = {k: v for k, v in list(csv.reader(io.StringIO(out.read_text())))[1:]}
    js = json.loads((demo_run / "a.json").read_text())
    assert json.loads(rows["handovers_total"]) == js["handovers_total"]
    assert json.loads(rows["delivery.ratio"]) == js["delivery"]["ratio"]
    assert json.loads(rows["run_digest"]) == js["run_digest"]


def test_replay_matches(demo_run, capsys):
    assert main(["replay", str(demo_run / "a.log.jsonl")]) == 0
    assert capsys.readouterr().out.strip() == "match"


def test_replay_detects_deleted_line(demo_run, tmp_path, capsys):
    lines = (demo_run / "a.log.jsonl").read_text().splitlines()
    cut = tmp_path / "a.log.jsonl"
    cut.write_text("\n".join(lines[:50] + lines[51:]) + "\n")
    assert main(["replay", str(cut), "--report", str(demo_run / "a.json")]) == 1
    assert capsys.readouterr().out.strip() == "mismatch"


def test_replay_empty_log(tmp_path, capsys):
    p = tmp_path / "e.log.jsonl"
    p.write_text("")
    assert main(["replay", str(p)]) == 0
    assert capsys.readouterr().out.strip() == "match"


def test_replay_malformed_log(tmp_path):
    p = tmp_path / "m.log.jsonl"
    p.write_text('{"type": "meta"\n')
    assert main(["replay", str(p)]) == 2


def test_profile_override_and_env_log_level(tmp_path):
    s = _scenario(tmp_path, duration_s=3, fleet={"count": 2})
    out = tmp_path / "r.json"
    env = {"RSMU_SIM_LOG_LEVEL": "DEBUG", "PATH": "/usr/bin:/bin"}
    proc = subprocess.run([sys.executable, "-m", "rsmu_sim.cli", "run", "--scenario", str(s), "--profile", "dsrc",
                           "--out", str(out)], capture_output=True, text=True, env={**env, "PYTHONPATH": str(ROOT / "src")})
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["profile"] == "dsrc"
    assert "handovers=" in proc.stderr
