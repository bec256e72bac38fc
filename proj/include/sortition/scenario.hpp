#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sortition/simharness.hpp"

namespace sortition::scenario {

inline constexpr std::string_view kSchema = "sortition-scenario-v1";
inline constexpr std::string_view kToolVersion = "0.1.0";

// Seed used when neither the scenario file nor a flag names one:
// SORTITION_SEED from the environment, else 1.
uint64_t default_seed();

// Campaign from scenario JSON. Ratios are decimal strings ("1.3") parsed
// exactly; unknown keys anywhere are schema violations. Throws
// std::invalid_argument with a line-free diagnostic.
sim::CampaignConfig parse_campaign(const std::string& json_text);
sim::CampaignConfig load_campaign(const std::filesystem::path& path);

std::string campaign_json(const sim::CampaignConfig& campaign);  // round-trips parse_campaign

// Reproducibility stamp embedded in every artifact. Deliberately carries no
// timestamps: rerunning with the manifest's parameters must reproduce the
// numeric columns byte for byte.
struct RunManifest {
    std::string subcommand;
    std::vector<std::pair<std::string, std::string>> parameters;  // resolved, insertion order
    uint64_t seed = 0;
    std::vector<std::string> outputs;

    void add(std::string key, std::string value);
    void add(std::string key, uint64_t value);
    std::string json() const;  // one line, keys sorted within each object
};

// Full-precision scientific rendering ("%.17g") and its log10 companion
// column; bound values span 1e-300..1 so both are emitted side by side.
std::string format_double(double v);
std::string format_log10(double v);

struct ReportFiles {
    std::filesystem::path summary;      // summary.json, always
    std::filesystem::path histogram;    // x_histogram.csv, always
    std::filesystem::path bound_check;  // bound_check.csv, when rows were computed
    std::filesystem::path transcript;   // transcript.jsonl, when the run kept one
};

ReportFiles write_report(const std::filesystem::path& dir, const sim::MonteCarloReport& report,
                         const std::vector<sim::BoundCheckRow>& bound_rows,
                         const RunManifest& manifest);

std::string summary_json(const sim::MonteCarloReport& report, const RunManifest& manifest);

}  // namespace sortition::scenario
