#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "json.hpp"
#include "sortition/accountant.hpp"
#include "sortition/bounds.hpp"
#include "sortition/refinement.hpp"
#include "sortition/scenario.hpp"
#include "sortition/simharness.hpp"

namespace py = pybind11;
using namespace sortition;
using nlohmann::json;

namespace {

Ratio ratio_arg(const std::string& text) { return Ratio::from_decimal(text); }

bounds::SelectionParams selection_params(uint64_t n_min, uint64_t c, uint64_t s,
                                         const std::string& alpha) {
    bounds::SelectionParams p{n_min, c, s, ratio_arg(alpha)};
    p.validate();
    return p;
}

std::string run_scenario_json(const std::string& text, std::optional<uint64_t> trials,
                              std::optional<uint64_t> seed, std::optional<unsigned> workers,
                              bool keep_transcript, const std::vector<double>& etas) {
    sim::CampaignConfig campaign = scenario::parse_campaign(text);
    if (trials) campaign.trials = *trials;
    if (seed) campaign.seed = *seed;
    if (workers) campaign.workers = *workers;
    if (keep_transcript) campaign.keep_transcript = true;

    sim::MonteCarloReport report;
    {
        py::gil_scoped_release unlock;
        report = sim::monte_carlo(campaign);
    }

    scenario::RunManifest manifest;
    manifest.subcommand = "python";
    manifest.seed = campaign.seed;
    manifest.add("campaign", scenario::campaign_json(campaign));

    json j = json::parse(scenario::summary_json(report, manifest));
    if (!etas.empty()) {
        bounds::SelectionParams params;
        params.population_floor = report.population_after_refine;
        params.dishonest = report.dishonest_after_refine;
        params.target = report.target;
        params.over_selection = report.over_selection;
        json rows = json::array();
        for (const auto& row : sim::compare_to_bound(report, params, etas)) {
            rows.push_back({{"eta", row.eta},
                            {"threshold", row.threshold},
                            {"exceed", row.exceed},
                            {"finalized", row.finalized},
                            {"empirical", row.empirical},
                            {"bound", row.bound},
                            {"sigma", row.sigma},
                            {"pass", row.pass}});
        }
        j["bound_check"] = rows;
    }
    if (keep_transcript) j["transcript"] = report.transcript;
    return j.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "secure participant selection: bounds, protocol simulator, refinement";
    m.attr("__version__") = std::string(scenario::kToolVersion);

    // closed-form bounds; ratios are decimal strings so values stay exact
    m.def(
        "selection_probability",
        [](uint64_t n_min, uint64_t s, const std::string& alpha) {
            bounds::SelectionParams p{n_min, 0, s, ratio_arg(alpha)};
            return bounds::selection_probability(p);
        },
        py::arg("n_min"), py::arg("s"), py::arg("alpha"));
    m.def(
        "dishonest_fraction_bound",
        [](uint64_t n_min, uint64_t c, uint64_t s, const std::string& alpha, double eta) {
            return bounds::dishonest_fraction_bound(selection_params(n_min, c, s, alpha), eta);
        },
        py::arg("n_min"), py::arg("c"), py::arg("s"), py::arg("alpha"), py::arg("eta"));
    m.def(
        "secagg_failure_bound",
        [](uint64_t n_min, uint64_t c, uint64_t s, const std::string& alpha, uint64_t t) {
            return bounds::secagg_failure_bound(selection_params(n_min, c, s, alpha), t);
        },
        py::arg("n_min"), py::arg("c"), py::arg("s"), py::arg("alpha"), py::arg("t"));
    m.def(
        "overselection_success",
        [](uint64_t n, uint64_t s, const std::string& alpha) {
            return bounds::overselection_success(n, s, ratio_arg(alpha));
        },
        py::arg("n"), py::arg("s"), py::arg("alpha"));
    m.def(
        "multi_round_exposure",
        [](uint64_t n_min, uint64_t c, uint64_t s, const std::string& alpha, uint64_t k,
           uint64_t rounds) {
            return bounds::multi_round_exposure(selection_params(n_min, c, s, alpha), k, rounds);
        },
        py::arg("n_min"), py::arg("c"), py::arg("s"), py::arg("alpha"), py::arg("k"),
        py::arg("rounds"));
    m.def(
        "repeat_selection_bound",
        [](uint64_t n_min, uint64_t s, const std::string& alpha, uint64_t rounds, uint64_t r) {
            return bounds::repeat_selection_bound(selection_params(n_min, 0, s, alpha), rounds, r);
        },
        py::arg("n_min"), py::arg("s"), py::arg("alpha"), py::arg("rounds"), py::arg("r"));
    m.def(
        "repeat_selection_bound_server",
        [](uint64_t n_min, uint64_t s, const std::string& alpha, uint64_t rounds, uint64_t r,
           uint64_t n_max) {
            return bounds::repeat_selection_bound_server(selection_params(n_min, 0, s, alpha),
                                                         rounds, r, n_max);
        },
        py::arg("n_min"), py::arg("s"), py::arg("alpha"), py::arg("rounds"), py::arg("r"),
        py::arg("n_max"));
    m.def(
        "ddp_epsilon",
        [](const std::string& variant, uint64_t n_min, uint64_t c, uint64_t s,
           const std::string& alpha, uint64_t t, uint64_t rounds, double delta, double sigma,
           uint64_t n_max, const std::string& accountant, double accountant_value) {
            bounds::EpsilonParams params;
            params.selection = selection_params(n_min, c, s, alpha);
            params.secagg_threshold = t;
            params.rounds = rounds;
            params.delta = delta;
            params.sigma = sigma;
            params.max_population = n_max;
            bool server = variant == "server";
            if (!server && variant != "client")
                throw std::invalid_argument("variant must be client or server");
            params.validate(server);
            auto acc = bounds::accountant_by_name(accountant, accountant_value);
            bounds::EpsilonResult r = server ? bounds::ddp_epsilon_server(params, *acc)
                                             : bounds::ddp_epsilon_client(params, *acc);
            py::dict d;
            d["feasible"] = r.feasible;
            d["epsilon"] = r.epsilon;
            d["k"] = r.k;
            d["r"] = r.r;
            d["p_k"] = r.p_k;
            d["q_r"] = r.q_r;
            d["delta_prime"] = r.delta_prime;
            return d;
        },
        py::arg("variant"), py::arg("n_min"), py::arg("c"), py::arg("s"), py::arg("alpha"),
        py::arg("t"), py::arg("rounds"), py::arg("delta"), py::arg("sigma"),
        py::arg("n_max") = 0, py::arg("accountant") = "gaussian",
        py::arg("accountant_value") = 1.0);

    // refinement
    py::class_<refine::ClientUtility>(m, "ClientUtility")
        .def(py::init([](uint64_t client_id, double latency, uint64_t dataset_size,
                         double loss_rms) {
                 return refine::ClientUtility{client_id, latency, dataset_size, loss_rms};
             }),
             py::arg("client_id"), py::arg("latency"), py::arg("dataset_size"),
             py::arg("loss_rms"))
        .def_readwrite("client_id", &refine::ClientUtility::client_id)
        .def_readwrite("latency", &refine::ClientUtility::latency)
        .def_readwrite("dataset_size", &refine::ClientUtility::dataset_size)
        .def_readwrite("loss_rms", &refine::ClientUtility::loss_rms);
    m.def(
        "select_excluded",
        [](const std::vector<refine::ClientUtility>& utilities, const std::string& strategy,
           const std::string& d, double deadline, double penalty, bool capped) {
            refine::RefineParams params;
            params.strategy = refine::strategy_by_name(strategy);
            params.exclusion = ratio_arg(d);
            params.deadline = deadline;
            params.penalty = penalty;
            params.capped = capped;
            return refine::select_excluded(utilities, params);
        },
        py::arg("utilities"), py::arg("strategy"), py::arg("d"), py::arg("deadline") = 1.0,
        py::arg("penalty") = 1.0, py::arg("capped") = true);
    m.def(
        "worst_case_base_rate",
        [](uint64_t c, uint64_t n, const std::string& d) {
            return refine::worst_case_base_rate(c, n, ratio_arg(d));
        },
        py::arg("c"), py::arg("n"), py::arg("d"));
    m.def("zipf_quality_gain", &refine::zipf_quality_gain, py::arg("d"), py::arg("p"));
    m.def(
        "synth_population",
        [](uint64_t n, uint64_t seed, double zipf_a) {
            std::vector<uint64_t> ids(n);
            for (uint64_t i = 0; i < n; ++i) ids[i] = i + 1;
            return refine::synth_population(ids, seed, zipf_a);
        },
        py::arg("n"), py::arg("seed"), py::arg("zipf_a") = 1.2);

    // simulator: scenario JSON text in, summary JSON text out
    m.def("run_scenario_json", &run_scenario_json, py::arg("text"),
          py::arg("trials") = py::none(), py::arg("seed") = py::none(),
          py::arg("workers") = py::none(), py::arg("keep_transcript") = false,
          py::arg("etas") = std::vector<double>{});
    m.def("canonical_scenario_json",
          [](const std::string& text) { return scenario::campaign_json(scenario::parse_campaign(text)); },
          py::arg("text"));
    m.def("default_seed", &scenario::default_seed);
}
