#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "sortition/bounds.hpp"
#include "sortition/primitives.hpp"
#include "sortition/protocol.hpp"
#include "sortition/ratio.hpp"
#include "sortition/refinement.hpp"

namespace sortition::sim {

struct PopulationSpec {
    uint64_t size = 0;
    uint64_t dishonest = 0;  // coordinated clients, ids drawn by seed
    uint64_t seed = 1;       // keys, dishonest-id draw, utility profile
    double zipf_a = 1.2;     // latency profile shape
};

enum class StrategyKind : uint8_t {
    HonestServer,
    BiasedFinalize,
    OmitHonestClaims,
    InconsistentLists,
    ForgeRandomness,
    AnnounceN,
    AdversarialRefiner,
    DelayClaims,
};

std::string_view strategy_kind_name(StrategyKind kind);
StrategyKind strategy_kind_by_name(std::string_view name);

struct StrategySpec {
    StrategyKind kind = StrategyKind::HonestServer;
    double fraction = 0.0;   // OmitHonestClaims / DelayClaims: affected share
    uint64_t value = 0;      // AnnounceN: population / DelayClaims: delay ticks
    Ratio exclusion{0, 1};   // AdversarialRefiner: removed honest fraction

    void validate() const;
};

// Fixed per campaign: clients with their keys, the registry, the utility
// profile, and which ids are coordinated with the server.
struct Universe {
    std::vector<protocol::ClientState> clients;  // ids 1..n ascending
    protocol::Registry registry;
    std::vector<refine::ClientUtility> utilities;
    std::vector<uint64_t> dishonest_ids;  // ascending

    static Universe build(const PopulationSpec& spec, const CryptoSuite& crypto);
};

// Optional honest pre-selection filtering applied to the population before
// every round (the adversarial variant lives in StrategyKind instead).
struct RefineSpec {
    bool enabled = false;
    refine::RefineParams params;
};

struct CampaignConfig {
    PopulationSpec population;
    protocol::ProtocolConfig config;
    StrategySpec strategy;
    RefineSpec refine;
    uint64_t trials = 1;
    uint64_t seed = 1;           // per-trial seeds derive from this
    std::string crypto = "fast";
    unsigned workers = 1;        // worker count never changes the results
    bool keep_transcript = false;
};

struct MonteCarloReport {
    uint64_t trials = 0;
    uint64_t finalized = 0;              // completed, no honest-member abort
    uint64_t honest_finalizations = 0;   // finalized with >= 1 honest acceptor
    uint64_t server_aborts = 0;
    uint64_t enough_candidate_rounds = 0;  // |C| >= s before finalize
    uint64_t agreement_violations = 0;
    uint64_t soundness_violations = 0;  // accepted sets failing re-verification
    std::vector<uint64_t> x_histogram;  // finalized rounds only, index = x
    double mean_x = 0.0;                // over finalized rounds
    std::map<std::string, uint64_t> server_abort_reasons;
    std::map<std::string, uint64_t> honest_abort_reasons;
    protocol::MessageStats stats;  // totals across trials, max over participants

    // scenario echo, for writers and bound comparison
    uint64_t population = 0;
    uint64_t dishonest = 0;
    uint64_t population_after_refine = 0;
    uint64_t dishonest_after_refine = 0;
    uint64_t target = 0;
    Ratio over_selection{1, 1};
    uint64_t population_floor = 0;
    std::string strategy;
    std::string crypto;
    uint64_t base_seed = 0;
    uint64_t base_round = 0;

    std::vector<std::string> transcript;  // trial order, when requested
};

// Per-round server deviation for a strategy. Fresh instance per trial; some
// strategies keep per-round state.
std::unique_ptr<protocol::ServerBehavior> make_behavior(const StrategySpec& spec);

// One protocol round over an explicit population. Deterministic in seed.
protocol::RoundOutcome run_round(const std::vector<protocol::ClientState>& population,
                                 const protocol::Registry& registry,
                                 const protocol::ProtocolConfig& config,
                                 const StrategySpec& strategy, const CryptoSuite& crypto,
                                 uint64_t seed, std::vector<std::string>* transcript = nullptr);

// trials rounds with derived seeds (trial t uses round config.round + t and
// seed derive(seed, t)), reduced in trial order so the report is identical
// for any worker count. Every set accepted by an honest client is re-verified
// post hoc; failures land in soundness_violations.
MonteCarloReport monte_carlo(const CampaignConfig& campaign);

struct BoundCheckRow {
    double eta = 0.0;
    uint64_t threshold = 0;   // x must exceed this count
    uint64_t exceed = 0;      // finalized rounds with x > threshold
    uint64_t finalized = 0;
    double empirical = 0.0;   // exceed / finalized
    double bound = 0.0;       // analytic worst-case probability
    double sigma = 0.0;       // sqrt(bound * (1 - bound) / trials)
    bool pass = false;        // empirical <= bound + 3 sigma
};

// Empirical exceedance vs the analytic bound. params must describe the same
// scenario with population_floor equal to the (post-refinement) population;
// any mismatch in (c, s, alpha, n) or an empty report is an error.
std::vector<BoundCheckRow> compare_to_bound(const MonteCarloReport& report,
                                            const bounds::SelectionParams& params,
                                            const std::vector<double>& etas);

}  // namespace sortition::sim
