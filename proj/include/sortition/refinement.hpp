#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <gmpxx.h>

#include "sortition/ratio.hpp"

namespace sortition::refine {

// Per-client systems/statistics profile used by pre-selection filtering.
struct ClientUtility {
    uint64_t client_id = 0;
    double latency = 1.0;       // round-trip wall time, higher is slower
    uint64_t dataset_size = 0;  // local example count
    double loss_rms = 0.0;      // root mean square training loss
};

// dataset_size * loss_rms, optionally discounted by (deadline/latency)^penalty
// when the client is slower than the deadline.
double data_quality(const ClientUtility& u);
double oort_score(const ClientUtility& u, double deadline, double penalty);

enum class Strategy : uint8_t { Or, And, Joint };

std::string_view strategy_name(Strategy s);
Strategy strategy_by_name(std::string_view name);

struct RefineParams {
    Strategy strategy = Strategy::Or;
    Ratio exclusion{0, 1};  // d: fraction of the population to filter out
    double deadline = 1.0;  // T in the combined score
    double penalty = 1.0;   // exponent applied to the lateness factor
    bool capped = true;     // Or only: cap the union at floor(d*n)
};

// Ids to remove before selection, ascending. k = floor(d*n) clients are
// ranked out per criterion: Or unions the k slowest and the k lowest-quality
// (capped back to k by worst speed-rank + quality-rank sum unless capped is
// off), And intersects them, Joint takes the k lowest combined scores.
// Ties break toward the smaller client id. Throws when k == n, since that
// would empty the population.
std::vector<uint64_t> select_excluded(const std::vector<ClientUtility>& population,
                                      const RefineParams& params);

// Dishonest base rate after an adversary deletes a d-fraction of honest
// clients: min(1, dishonest / (population * (1 - d))).
double worst_case_base_rate(uint64_t dishonest, uint64_t population, Ratio exclusion);
mpq_class worst_case_base_rate_exact(uint64_t dishonest, uint64_t population, Ratio exclusion);

// Relative statistical-utility gain from dropping the worst d-tail of a
// Zipf(power) quality profile: (1 - d)^(-power).
double zipf_quality_gain(double exclusion, double power);

// Synthetic population: Zipf latency profile (rank 1 is slowest at 10.0,
// rank i at 10.0 * i^-zipf_a) shuffled over ids, dataset sizes uniform in
// [10, 1000], loss in [0.5, 4.0].
std::vector<ClientUtility> synth_population(const std::vector<uint64_t>& ids, uint64_t seed,
                                            double zipf_a = 1.2);

}  // namespace sortition::refine
