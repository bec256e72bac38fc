import json
import os
import pathlib
import subprocess

import pytest

CLI = os.environ.get("SORTITION_CLI")
SCENARIOS = pathlib.Path(os.environ.get("SORTITION_SCENARIOS", "scenarios"))

pytestmark = pytest.mark.skipif(CLI is None, reason="SORTITION_CLI not set")


def run(*args, **kwargs):
    return subprocess.run([CLI, *args], capture_output=True, text=True, **kwargs)


def data_rows(stdout):
    lines = [l for l in stdout.splitlines() if l and not l.startswith("#")]
    return lines[0], lines[1:]


def test_bounds_theorem1_golden():
    r = run("bounds", "--theorem1", "--n-min", "200000", "--c", "1000", "--s", "200",
            "--alpha", "1.3", "--eta", "0.05")
    assert r.returncode == 0
    header, rows = data_rows(r.stdout)
    assert header == "eta,bound,log10_bound"
    bound = float(rows[0].split(",")[1])
    assert 1.3e-7 / 2 < bound < 1.3e-7 * 2


def test_bounds_overselect_sweep_monotone():
    r = run("bounds", "--overselect", "--n", "700", "--s", "70",
            "--alpha-sweep", "1.0:1.5:0.05")
    assert r.returncode == 0
    _, rows = data_rows(r.stdout)
    assert len(rows) == 11
    values = [float(row.split(",")[1]) for row in rows]
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_bounds_requires_one_mode():
    r = run("bounds", "--n-min", "100")
    assert r.returncode == 2


def test_refine_worst_case_curve():
    r = run("refine", "--worst-case", "--base-rate", "0.01", "--d-sweep", "0:0.5:0.05")
    assert r.returncode == 0
    _, rows = data_rows(r.stdout)
    assert len(rows) == 11
    for row in rows:
        d_text, rate, _ = row.split(",")
        num, den = (int(p) for p in d_text.split("/"))
        assert float(rate) == pytest.approx(0.01 / (1 - num / den), rel=1e-12)


def test_refine_fixture_exclusion():
    r = run("refine", "--strategy", "or", "--d", "0.2",
            "--utilities", str(SCENARIOS / "utilities_fixture.csv"))
    assert r.returncode == 0
    header, rows = data_rows(r.stdout)
    assert header == "excluded_client_id"
    assert rows == ["1", "3"]


def test_refine_zipf_gain():
    r = run("refine", "--zipf-gain", "--p", "1.2", "--d", "0.2")
    assert r.returncode == 0
    _, rows = data_rows(r.stdout)
    gain = float(rows[0].split(",")[2])
    assert gain == pytest.approx(0.8 ** -1.2, rel=1e-9)


def test_simulate_honest_writes_report(tmp_path):
    out = tmp_path / "run"
    r = run("simulate", str(SCENARIOS / "honest_100.json"), "--trials", "50",
            "--out", str(out), "--dump-transcript")
    assert r.returncode == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["finalized"] > 0
    assert summary["target"] == 10
    assert summary["manifest"]["subcommand"] == "simulate"
    assert (out / "x_histogram.csv").exists()
    assert (out / "transcript.jsonl").exists()


def test_simulate_deterministic_artifacts(tmp_path):
    args = ("simulate", str(SCENARIOS / "honest_100.json"), "--trials", "40",
            "--dump-transcript")
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(*args, "--out", str(a)).returncode == 0
    assert run(*args, "--out", str(b)).returncode == 0
    for name in ("summary.json", "x_histogram.csv", "transcript.jsonl"):
        left = (a / name).read_bytes()
        right = (b / name).read_bytes()
        assert left == right, name


def test_simulate_schema_violation_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema": "sortition-scenario-v1", "oops": 1}')
    r = run("simulate", str(bad))
    assert r.returncode == 2
    assert "oops" in r.stderr or "missing" in r.stderr


def test_simulate_forge_randomness_expected_aborts():
    r = run("simulate", str(SCENARIOS / "forge_randomness.json"), "--trials", "50")
    assert r.returncode == 0
    summary = json.loads(r.stdout)
    assert summary["honest_finalizations"] == 0


def test_simulate_assert_bounds(tmp_path):
    r = run("simulate", str(SCENARIOS / "biased_campaign.json"), "--assert-bounds",
            "--eta", "0.1", "--eta", "0.3")
    assert r.returncode == 0
