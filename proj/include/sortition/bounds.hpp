#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <gmpxx.h>

#include "sortition/accountant.hpp"
#include "sortition/logprob.hpp"
#include "sortition/ratio.hpp"

namespace sortition::bounds {

// Size of the randomness domain: outputs are 256-bit strings, m = 2^256.
const mpz_class& randomness_domain();

// floor(alpha * target * m / population). Saturates above m when
// alpha * target > population (every draw eligible).
mpz_class eligibility_threshold(const mpz_class& population, uint64_t target, Ratio alpha);

// ---------------------------------------------------------------------------
// Parameters shared by the selection-security bounds. population_floor is the
// smallest population honest clients accept (n_min), dishonest the assumed
// number of adversarial clients (c), target the participants per round (s).
struct SelectionParams {
    uint64_t population_floor = 0;
    uint64_t dishonest = 0;
    uint64_t target = 0;
    Ratio over_selection{1, 1};

    // target >= 1, population_floor >= target, over_selection >= 1,
    // over_selection * target <= population_floor. Throws std::invalid_argument.
    void validate() const;
};

// Per-client eligibility probability p = floor(alpha*s*m/n_min)/m, exact.
// target == 0 yields 0; no other validation so edge cases stay expressible.
mpq_class selection_probability_exact(const SelectionParams& params);
double selection_probability(const SelectionParams& params);

// ---------------------------------------------------------------------------
// One-shot binomial tails. tail_gt is Pr[X > k] for X ~ Binomial(count, p);
// k <= -1 gives 1, k >= count gives 0. Stable in log space down to ~1e-300.
LogProb binomial_tail_gt_log(uint64_t count, double p, int64_t k);
double binomial_tail_gt(uint64_t count, double p, int64_t k);

// Lower tail Pr[X <= k] in log space, same conventions.
LogProb binomial_cdf_log(uint64_t count, double p, int64_t k);

// Exact rational tail for oracle checks. Cost grows with count; intended for
// moderate counts (tests use <= 1000).
mpq_class binomial_tail_gt_exact(uint64_t count, const mpq_class& p, int64_t k);

// ---------------------------------------------------------------------------
// Pr[more than eta*s dishonest participants in a round] upper bound:
// Binomial(c, p) tail beyond floor(eta*s). eta in (0, 1).
LogProb dishonest_fraction_bound_log(const SelectionParams& params, double eta);
double dishonest_fraction_bound(const SelectionParams& params, double eta);

// Secure-aggregation privacy failure: Pr[dishonest participants > 2t - s]
// for reconstruction threshold t, feasible when s/2 < t <= s.
LogProb secagg_failure_bound_log(const SelectionParams& params, uint64_t threshold_t);
double secagg_failure_bound(const SelectionParams& params, uint64_t threshold_t);

// Pr[at least s of n clients self-select] with per-client probability
// alpha*s/n (clamped to 1 when alpha*s > n): round-success probability.
LogProb overselection_success_log(uint64_t population, uint64_t target, Ratio alpha);
double overselection_success(uint64_t population, uint64_t target, Ratio alpha);
mpq_class overselection_success_exact(uint64_t population, uint64_t target, Ratio alpha);

// ---------------------------------------------------------------------------
// Multi-round exposure: p_k = Pr[any round seats more than k dishonest
// participants within R rounds] = 1 - CDF(k)^R. Exact 0 when k >= c.
double multi_round_exposure(const SelectionParams& params, uint64_t k, uint64_t rounds);

// Client-sampled repeat-participation bound q_r: probability some client is
// selected in more than r of R rounds, via the recursion
//   phi_{j} = 1 - gamma_j * (1 - phi_{j-1}),   phi_r = 0,
//   gamma_j = Pr[Binomial(j-1, p) <= r-1]^s,
// evaluated at j = R. r > R is invalid.
double repeat_selection_bound(const SelectionParams& params, uint64_t rounds, uint64_t r);

// Server-sampled analogue over a population cap: 1 - Pr[Binomial(R,p) <= r]^n_max.
// Resolution floor ~ max_population * 2e-16: once the per-client CDF rounds
// to 1 in double precision the result flushes to 0.
double repeat_selection_bound_server(const SelectionParams& params, uint64_t rounds, uint64_t r,
                                     uint64_t max_population);

// ---------------------------------------------------------------------------
// Distributed-DP epsilon under adversarial participant selection: minimize
// E(s, k, r, sigma, delta') over the (k, r) grid where the failure mass
// p_k + q_r still fits under delta, with
//   delta' = 1 - (1 - delta) / (1 - p_k - q_r).
struct EpsilonParams {
    SelectionParams selection;
    uint64_t secagg_threshold = 0;  // t; k scans [0, min(c, 2t - s)]
    uint64_t rounds = 0;            // R; r scans [0, R]
    double delta = 0.0;
    double sigma = 0.0;
    uint64_t max_population = 0;  // server variant only

    void validate(bool server_variant) const;
};

struct EpsilonResult {
    bool feasible = false;
    double epsilon = 0.0;
    uint64_t k = 0;
    uint64_t r = 0;
    double p_k = 0.0;
    double q_r = 0.0;
    double delta_prime = 0.0;
};

EpsilonResult ddp_epsilon_client(const EpsilonParams& params, const PrivacyAccountant& accountant);
EpsilonResult ddp_epsilon_server(const EpsilonParams& params, const PrivacyAccountant& accountant);

}  // namespace sortition::bounds
