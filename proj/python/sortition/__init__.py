"""Secure participant selection: analytic bounds, protocol simulator, refinement."""

import json as _json

from ._core import (
    ClientUtility,
    __version__,
    canonical_scenario_json,
    ddp_epsilon,
    default_seed,
    dishonest_fraction_bound,
    multi_round_exposure,
    overselection_success,
    repeat_selection_bound,
    repeat_selection_bound_server,
    run_scenario_json,
    secagg_failure_bound,
    select_excluded,
    selection_probability,
    synth_population,
    worst_case_base_rate,
    zipf_quality_gain,
)

__all__ = [
    "ClientUtility",
    "__version__",
    "canonical_scenario",
    "ddp_epsilon",
    "default_seed",
    "dishonest_fraction_bound",
    "load_scenario",
    "multi_round_exposure",
    "overselection_success",
    "repeat_selection_bound",
    "repeat_selection_bound_server",
    "run_scenario",
    "secagg_failure_bound",
    "select_excluded",
    "selection_probability",
    "synth_population",
    "worst_case_base_rate",
    "zipf_quality_gain",
]


def _as_text(scenario):
    if isinstance(scenario, dict):
        return _json.dumps(scenario)
    return scenario


def run_scenario(scenario, trials=None, seed=None, workers=None, keep_transcript=False,
                 etas=()):
    """Run a Monte Carlo campaign from scenario JSON (text or dict); returns the summary dict.

    When etas are given the summary carries a "bound_check" list comparing the
    empirical exceedance against the analytic worst-case bound.
    """
    out = run_scenario_json(_as_text(scenario), trials=trials, seed=seed, workers=workers,
                            keep_transcript=keep_transcript, etas=list(etas))
    return _json.loads(out)


def canonical_scenario(scenario):
    """Validate scenario JSON (text or dict) and return its fully resolved form."""
    return _json.loads(canonical_scenario_json(_as_text(scenario)))


def load_scenario(path):
    """Read and validate a scenario file; returns the fully resolved dict."""
    with open(path, "r", encoding="utf-8") as fh:
        return canonical_scenario(fh.read())
