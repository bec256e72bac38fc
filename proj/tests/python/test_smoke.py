import json
import os
import pathlib

import pytest

import sortition


SCENARIOS = pathlib.Path(os.environ.get("SORTITION_SCENARIOS", "scenarios"))


def read_scenario(name):
    return (SCENARIOS / name).read_text()


def test_version():
    assert sortition.__version__ == "0.1.0"


def test_dishonest_fraction_bound_golden():
    v = sortition.dishonest_fraction_bound(200000, 1000, 200, "1.3", 0.05)
    assert 1.3e-7 / 2 < v < 1.3e-7 * 2


def test_secagg_bound_within_reported_ceiling():
    v = sortition.secagg_failure_bound(200000, 1000, 200, "1.3", 106)
    assert 0 < v <= 8.9e-6


def test_overselection_success_monotone_in_alpha():
    values = [sortition.overselection_success(700, 70, f"{num}/100") for num in range(100, 151, 5)]
    assert all(0 < v <= 1 for v in values)
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert values[-1] > 0.999


def test_selection_probability_scales():
    p = sortition.selection_probability(200000, 200, "1.3")
    assert p == pytest.approx(1.3 * 200 / 200000, rel=1e-12)


def test_repeat_bound_vanishes_at_full_tolerance():
    assert sortition.repeat_selection_bound(10000, 50, "1.3", 12, 12) == 0.0


def test_worst_case_base_rate():
    assert sortition.worst_case_base_rate(8, 800, "0.2") == pytest.approx(0.0125, rel=1e-15)


def test_zipf_quality_gain():
    assert sortition.zipf_quality_gain(0.2, 1.2) == pytest.approx(0.8 ** -1.2, rel=1e-12)


def test_select_excluded_fixture():
    clients = [
        sortition.ClientUtility(1, 100.0, 50, 1.0),
        sortition.ClientUtility(2, 90.0, 90, 1.0),
        sortition.ClientUtility(3, 50.0, 5, 1.0),
        sortition.ClientUtility(4, 10.0, 6, 1.0),
    ] + [sortition.ClientUtility(i, 20.0 + i, 100 + i, 1.0) for i in range(5, 11)]
    assert sortition.select_excluded(clients, "or", "0.2") == [1, 3]
    assert sortition.select_excluded(clients, "and", "0.2") == []
    assert sortition.select_excluded(clients, "or", "0.2", capped=False) == [1, 2, 3, 4]


def test_synth_population_deterministic():
    a = sortition.synth_population(50, 9)
    b = sortition.synth_population(50, 9)
    assert [(u.client_id, u.latency, u.dataset_size, u.loss_rms) for u in a] == [
        (u.client_id, u.latency, u.dataset_size, u.loss_rms) for u in b
    ]
    assert len(a) == 50
    assert all(u.latency > 0 for u in a)


def test_ddp_epsilon_mock_accountant():
    r = sortition.ddp_epsilon("client", 10000, 100, 40, "1.3", 30, 10, 1e-6, 1.0,
                              accountant="mock")
    if r["feasible"]:
        assert r["epsilon"] == pytest.approx(r["k"] + r["r"])
    rs = sortition.ddp_epsilon("server", 10000, 100, 40, "1.3", 30, 10, 1e-6, 1.0,
                               n_max=20000, accountant="mock")
    assert set(rs) == {"feasible", "epsilon", "k", "r", "p_k", "q_r", "delta_prime"}


def test_run_scenario_honest():
    report = sortition.run_scenario(read_scenario("honest_100.json"), trials=60)
    assert report["trials"] == 60
    assert report["finalized"] > 0
    assert report["honest_finalizations"] == report["finalized"]
    assert report["mean_x"] == 0.0
    assert report["soundness_violations"] == 0
    assert report["agreement_violations"] == 0


def test_run_scenario_deterministic():
    text = read_scenario("honest_100.json")
    a = sortition.run_scenario(text, trials=40, keep_transcript=True)
    b = sortition.run_scenario(text, trials=40, keep_transcript=True)
    assert a == b
    assert len(a["transcript"]) > 0


def test_run_scenario_forge_randomness():
    report = sortition.run_scenario(read_scenario("forge_randomness.json"), trials=60)
    assert report["honest_finalizations"] == 0
    assert report["finalized"] == 0
    assert "BadProof" in report["honest_abort_reasons"]


def test_run_scenario_accepts_dict_and_roundtrips():
    scenario = json.loads(read_scenario("honest_100.json"))
    canonical = sortition.canonical_scenario(scenario)
    assert canonical["config"]["over_selection"] == "13/10"
    report = sortition.run_scenario(canonical, trials=5)
    assert report["trials"] == 5


def test_scenario_schema_rejected():
    scenario = json.loads(read_scenario("honest_100.json"))
    scenario["surprise"] = 1
    with pytest.raises(ValueError, match="unknown key"):
        sortition.canonical_scenario(scenario)
    del scenario["surprise"]
    scenario["config"]["over_selection"] = 1.3
    with pytest.raises(ValueError, match="decimal string"):
        sortition.canonical_scenario(scenario)


def test_bound_check_rows():
    report = sortition.run_scenario(read_scenario("biased_campaign.json"), trials=500,
                                    etas=[0.1, 0.3])
    rows = report["bound_check"]
    assert [row["eta"] for row in rows] == [0.1, 0.3]
    assert all(row["finalized"] == report["finalized"] for row in rows)
    assert rows[1]["threshold"] == 15
