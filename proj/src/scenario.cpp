#include "sortition/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace sortition::scenario {

using nlohmann::json;

uint64_t default_seed() {
    const char* env = std::getenv("SORTITION_SEED");
    if (env == nullptr || *env == '\0') return 1;
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
        throw std::invalid_argument("SORTITION_SEED is not an unsigned integer");
    return v;
}

namespace {

[[noreturn]] void bad(const std::string& what) { throw std::invalid_argument(what); }

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* a : allowed) known = known || key == a;
        if (!known) bad(std::string("unknown key \"") + key + "\" in " + where);
    }
}

const json& require(const json& j, const char* key, const char* where) {
    auto it = j.find(key);
    if (it == j.end()) bad(std::string("missing key \"") + key + "\" in " + where);
    return *it;
}

uint64_t as_u64(const json& v, const char* what) {
    if (!v.is_number_unsigned()) bad(std::string(what) + " must be an unsigned integer");
    return v.get<uint64_t>();
}

double as_double(const json& v, const char* what) {
    if (!v.is_number()) bad(std::string(what) + " must be a number");
    return v.get<double>();
}

std::string as_string(const json& v, const char* what) {
    if (!v.is_string()) bad(std::string(what) + " must be a string");
    return v.get<std::string>();
}

bool as_bool(const json& v, const char* what) {
    if (!v.is_boolean()) bad(std::string(what) + " must be a boolean");
    return v.get<bool>();
}

Ratio as_ratio(const json& v, const char* what) {
    // decimal strings only: floating point literals would not be exact
    if (!v.is_string()) bad(std::string(what) + " must be a decimal string, e.g. \"1.3\"");
    try {
        return Ratio::from_decimal(v.get<std::string>());
    } catch (const std::exception& e) {
        bad(std::string(what) + ": " + e.what());
    }
}

uint64_t get_u64(const json& j, const char* key, uint64_t fallback, const char* where) {
    auto it = j.find(key);
    return it == j.end() ? fallback : as_u64(*it, (std::string(where) + "." + key).c_str());
}

}  // namespace

sim::CampaignConfig parse_campaign(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        bad(std::string("scenario is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) bad("scenario must be a JSON object");
    check_keys(j, {"schema", "population", "config", "strategy", "refine", "trials", "seed",
                   "crypto", "workers"},
               "scenario");
    if (as_string(require(j, "schema", "scenario"), "schema") != kSchema)
        bad(std::string("schema must be \"") + std::string(kSchema) + "\"");

    sim::CampaignConfig campaign;

    const json& pop = require(j, "population", "scenario");
    if (!pop.is_object()) bad("population must be an object");
    check_keys(pop, {"size", "dishonest", "seed", "zipf_a"}, "population");
    campaign.population.size = as_u64(require(pop, "size", "population"), "population.size");
    campaign.population.dishonest = get_u64(pop, "dishonest", 0, "population");
    campaign.population.seed = get_u64(pop, "seed", 1, "population");
    if (auto it = pop.find("zipf_a"); it != pop.end())
        campaign.population.zipf_a = as_double(*it, "population.zipf_a");
    if (campaign.population.dishonest > campaign.population.size)
        bad("population.dishonest exceeds population.size");

    const json& cfg = require(j, "config", "scenario");
    if (!cfg.is_object()) bad("config must be an object");
    check_keys(cfg, {"target", "over_selection", "population_floor", "timeout_ticks", "variant",
                     "round"},
               "config");
    campaign.config.target = as_u64(require(cfg, "target", "config"), "config.target");
    campaign.config.over_selection =
        as_ratio(require(cfg, "over_selection", "config"), "config.over_selection");
    campaign.config.population_floor =
        as_u64(require(cfg, "population_floor", "config"), "config.population_floor");
    campaign.config.timeout_ticks =
        get_u64(cfg, "timeout_ticks", campaign.config.timeout_ticks, "config");
    if (auto it = cfg.find("variant"); it != cfg.end())
        campaign.config.variant = protocol::variant_by_name(as_string(*it, "config.variant"));
    campaign.config.round = get_u64(cfg, "round", campaign.config.round, "config");

    const json& strat = require(j, "strategy", "scenario");
    if (!strat.is_object()) bad("strategy must be an object");
    check_keys(strat, {"kind", "fraction", "value", "exclusion"}, "strategy");
    campaign.strategy.kind =
        sim::strategy_kind_by_name(as_string(require(strat, "kind", "strategy"), "strategy.kind"));
    if (auto it = strat.find("fraction"); it != strat.end())
        campaign.strategy.fraction = as_double(*it, "strategy.fraction");
    campaign.strategy.value = get_u64(strat, "value", 0, "strategy");
    if (auto it = strat.find("exclusion"); it != strat.end())
        campaign.strategy.exclusion = as_ratio(*it, "strategy.exclusion");

    if (auto it = j.find("refine"); it != j.end()) {
        const json& ref = *it;
        if (!ref.is_object()) bad("refine must be an object");
        check_keys(ref, {"strategy", "exclusion", "deadline", "penalty", "capped"}, "refine");
        campaign.refine.enabled = true;
        campaign.refine.params.strategy =
            refine::strategy_by_name(as_string(require(ref, "strategy", "refine"),
                                               "refine.strategy"));
        campaign.refine.params.exclusion =
            as_ratio(require(ref, "exclusion", "refine"), "refine.exclusion");
        if (auto d = ref.find("deadline"); d != ref.end())
            campaign.refine.params.deadline = as_double(*d, "refine.deadline");
        if (auto p = ref.find("penalty"); p != ref.end())
            campaign.refine.params.penalty = as_double(*p, "refine.penalty");
        if (auto c = ref.find("capped"); c != ref.end())
            campaign.refine.params.capped = as_bool(*c, "refine.capped");
    }

    campaign.trials = as_u64(require(j, "trials", "scenario"), "trials");
    if (campaign.trials == 0) bad("trials must be >= 1");
    campaign.seed = j.contains("seed") ? as_u64(j["seed"], "seed") : default_seed();
    if (auto it = j.find("crypto"); it != j.end())
        campaign.crypto = as_string(*it, "crypto");
    crypto_by_name(campaign.crypto);  // rejects unknown backends early
    campaign.workers = static_cast<unsigned>(get_u64(j, "workers", 1, "scenario"));

    campaign.config.validate();
    campaign.strategy.validate();
    return campaign;
}

sim::CampaignConfig load_campaign(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) bad("cannot open scenario file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_campaign(buf.str());
}

std::string campaign_json(const sim::CampaignConfig& campaign) {
    json j;
    j["schema"] = kSchema;
    j["population"] = {{"size", campaign.population.size},
                       {"dishonest", campaign.population.dishonest},
                       {"seed", campaign.population.seed},
                       {"zipf_a", campaign.population.zipf_a}};
    j["config"] = {{"target", campaign.config.target},
                   {"over_selection", campaign.config.over_selection.str()},
                   {"population_floor", campaign.config.population_floor},
                   {"timeout_ticks", campaign.config.timeout_ticks},
                   {"variant", std::string(protocol::variant_name(campaign.config.variant))},
                   {"round", campaign.config.round}};
    j["strategy"] = {{"kind", std::string(sim::strategy_kind_name(campaign.strategy.kind))},
                     {"fraction", campaign.strategy.fraction},
                     {"value", campaign.strategy.value},
                     {"exclusion", campaign.strategy.exclusion.str()}};
    if (campaign.refine.enabled)
        j["refine"] = {{"strategy", std::string(refine::strategy_name(
                            campaign.refine.params.strategy))},
                       {"exclusion", campaign.refine.params.exclusion.str()},
                       {"deadline", campaign.refine.params.deadline},
                       {"penalty", campaign.refine.params.penalty},
                       {"capped", campaign.refine.params.capped}};
    j["trials"] = campaign.trials;
    j["seed"] = campaign.seed;
    j["crypto"] = campaign.crypto;
    j["workers"] = campaign.workers;
    return j.dump();
}

// ---------------------------------------------------------------------------
// Manifest and writers

void RunManifest::add(std::string key, std::string value) {
    parameters.emplace_back(std::move(key), std::move(value));
}

void RunManifest::add(std::string key, uint64_t value) {
    parameters.emplace_back(std::move(key), std::to_string(value));
}

std::string RunManifest::json() const {
    nlohmann::json j;
    j["subcommand"] = subcommand;
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [k, v] : parameters) params[k] = v;
    j["parameters"] = params;
    j["seed"] = seed;
    j["outputs"] = outputs;
    j["tool_version"] = kToolVersion;
    return j.dump();
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string format_log10(double v) {
    if (v < 0.0) return "nan";
    if (v == 0.0) return "-inf";
    return format_double(std::log10(v));
}

std::string summary_json(const sim::MonteCarloReport& report, const RunManifest& manifest) {
    json j;
    j["schema"] = "sortition-summary-v1";
    j["manifest"] = json::parse(manifest.json());
    j["trials"] = report.trials;
    j["finalized"] = report.finalized;
    j["honest_finalizations"] = report.honest_finalizations;
    j["server_aborts"] = report.server_aborts;
    j["enough_candidate_rounds"] = report.enough_candidate_rounds;
    j["agreement_violations"] = report.agreement_violations;
    j["soundness_violations"] = report.soundness_violations;
    j["mean_x"] = report.mean_x;
    j["x_histogram"] = report.x_histogram;
    j["server_abort_reasons"] = report.server_abort_reasons;
    j["honest_abort_reasons"] = report.honest_abort_reasons;
    j["population"] = report.population;
    j["dishonest"] = report.dishonest;
    j["population_after_refine"] = report.population_after_refine;
    j["dishonest_after_refine"] = report.dishonest_after_refine;
    j["target"] = report.target;
    j["over_selection"] = report.over_selection.str();
    j["population_floor"] = report.population_floor;
    j["strategy"] = report.strategy;
    j["crypto"] = report.crypto;
    j["base_seed"] = report.base_seed;
    j["base_round"] = report.base_round;
    j["bytes"] = {{"server_sent", report.stats.server_sent},
                  {"server_received", report.stats.server_received},
                  {"server_sent_by_stage",
                   std::vector<uint64_t>(report.stats.server_sent_by_stage,
                                         report.stats.server_sent_by_stage + 4)},
                  {"server_received_by_stage",
                   std::vector<uint64_t>(report.stats.server_received_by_stage,
                                         report.stats.server_received_by_stage + 4)},
                  {"max_participant_bytes", report.stats.max_participant_bytes},
                  {"message_count", report.stats.message_count}};
    return j.dump(2);
}

ReportFiles write_report(const std::filesystem::path& dir, const sim::MonteCarloReport& report,
                         const std::vector<sim::BoundCheckRow>& bound_rows,
                         const RunManifest& manifest) {
    std::filesystem::create_directories(dir);
    ReportFiles files;

    files.summary = dir / "summary.json";
    {
        std::ofstream out(files.summary, std::ios::binary);
        out << summary_json(report, manifest) << '\n';
    }

    files.histogram = dir / "x_histogram.csv";
    {
        std::ofstream out(files.histogram, std::ios::binary);
        out << "# sortition-histogram v1\n";
        out << "# manifest: " << manifest.json() << '\n';
        out << "x,count,fraction,log10_fraction\n";
        for (size_t x = 0; x < report.x_histogram.size(); ++x) {
            double fraction = report.finalized == 0
                                  ? 0.0
                                  : static_cast<double>(report.x_histogram[x]) /
                                        static_cast<double>(report.finalized);
            out << x << ',' << report.x_histogram[x] << ',' << format_double(fraction) << ','
                << format_log10(fraction) << '\n';
        }
    }

    if (!bound_rows.empty()) {
        files.bound_check = dir / "bound_check.csv";
        std::ofstream out(files.bound_check, std::ios::binary);
        out << "# sortition-bound-check v1\n";
        out << "# manifest: " << manifest.json() << '\n';
        out << "eta,threshold,exceed,finalized,empirical,log10_empirical,bound,log10_bound,"
               "sigma,pass\n";
        for (const auto& row : bound_rows) {
            out << format_double(row.eta) << ',' << row.threshold << ',' << row.exceed << ','
                << row.finalized << ',' << format_double(row.empirical) << ','
                << format_log10(row.empirical) << ',' << format_double(row.bound) << ','
                << format_log10(row.bound) << ',' << format_double(row.sigma) << ','
                << (row.pass ? "true" : "false") << '\n';
        }
    }

    if (!report.transcript.empty()) {
        files.transcript = dir / "transcript.jsonl";
        std::ofstream out(files.transcript, std::ios::binary);
        for (const std::string& line : report.transcript) out << line << '\n';
    }

    return files;
}

}  // namespace sortition::scenario
