#include "sortition/bounds.hpp"

#include <cmath>
#include <stdexcept>

#include "sortition/accountant.hpp"

namespace sortition::bounds {

namespace {

double log_gamma(double x) {
#if defined(__GLIBC__) || defined(__linux__)
    int sign = 0;
    return lgamma_r(x, &sign);
#else
    return std::lgamma(x);
#endif
}

double log_choose(uint64_t n, uint64_t k) {
    return log_gamma(static_cast<double>(n) + 1.0) - log_gamma(static_cast<double>(k) + 1.0) -
           log_gamma(static_cast<double>(n - k) + 1.0);
}

// log(1 - exp(x)) for x <= 0 without cancellation.
double log1mexp(double x) {
    if (x >= 0.0) return -std::numeric_limits<double>::infinity();
    if (x > -0.6931471805599453) return std::log(-std::expm1(x));
    return std::log1p(-std::exp(x));
}

// log of sum_{i=lo}^{hi} C(count,i) p^i q^(count-i), max-shifted with
// compensated accumulation. Caller guarantees 0 <= lo <= hi <= count and
// p strictly inside (0,1).
double log_pmf_range(uint64_t count, double log_p, double log_q, uint64_t lo, uint64_t hi) {
    auto term = [&](uint64_t i) {
        return log_choose(count, i) + static_cast<double>(i) * log_p +
               static_cast<double>(count - i) * log_q;
    };
    double max_term = -std::numeric_limits<double>::infinity();
    for (uint64_t i = lo; i <= hi; ++i) {
        double t = term(i);
        if (t > max_term) max_term = t;
    }
    if (std::isinf(max_term)) return max_term;
    double sum = 0.0, comp = 0.0;
    for (uint64_t i = lo; i <= hi; ++i) {
        double v = std::exp(term(i) - max_term);
        double t = sum + v;
        comp += (std::fabs(sum) >= std::fabs(v)) ? (sum - t) + v : (v - t) + sum;
        sum = t;
    }
    return max_term + std::log(sum + comp);
}

// floor with a relative nudge so decimal inputs like 0.29*100 do not land one
// integer short of their exact value.
int64_t floor_nudged(double x) { return static_cast<int64_t>(std::floor(x + 1e-9)); }

mpq_class mpq_pow(const mpq_class& base, uint64_t e) {
    mpq_class out;
    mpz_pow_ui(out.get_num_mpz_t(), base.get_num_mpz_t(), static_cast<unsigned long>(e));
    mpz_pow_ui(out.get_den_mpz_t(), base.get_den_mpz_t(), static_cast<unsigned long>(e));
    out.canonicalize();
    return out;
}

}  // namespace

const mpz_class& randomness_domain() {
    static const mpz_class m = [] {
        mpz_class v;
        mpz_ui_pow_ui(v.get_mpz_t(), 2, 256);
        return v;
    }();
    return m;
}

mpz_class eligibility_threshold(const mpz_class& population, uint64_t target, Ratio alpha) {
    if (population <= 0) throw std::invalid_argument("population must be positive");
    mpz_class numer = randomness_domain() * alpha.num;
    numer *= target;
    mpz_class denom = population * alpha.den;
    mpz_class out;
    mpz_fdiv_q(out.get_mpz_t(), numer.get_mpz_t(), denom.get_mpz_t());
    return out;
}

void SelectionParams::validate() const {
    if (target < 1) throw std::invalid_argument("target participants must be at least 1");
    if (population_floor < target) {
        throw std::invalid_argument("population floor below target participants");
    }
    if (over_selection.num < over_selection.den) {
        throw std::invalid_argument("over-selection factor below 1");
    }
    // alpha * s <= n_min keeps the eligibility probability a probability.
    mpz_class lhs = mpz_class(over_selection.num) * target;
    mpz_class rhs = mpz_class(over_selection.den) * population_floor;
    if (lhs > rhs) throw std::invalid_argument("over-selection exceeds population floor");
    if (dishonest > population_floor) {
        throw std::invalid_argument("more dishonest clients than the population floor");
    }
}

mpq_class selection_probability_exact(const SelectionParams& params) {
    if (params.target == 0) return mpq_class(0);
    mpz_class t =
        eligibility_threshold(mpz_class(params.population_floor), params.target, params.over_selection);
    if (t > randomness_domain()) t = randomness_domain();
    mpq_class p(t, randomness_domain());
    p.canonicalize();
    return p;
}

double selection_probability(const SelectionParams& params) {
    return selection_probability_exact(params).get_d();
}

LogProb binomial_cdf_log(uint64_t count, double p, int64_t k) {
    if (k < 0) return LogProb::zero();
    if (k >= static_cast<int64_t>(count)) return LogProb::one();
    if (p <= 0.0) return LogProb::one();
    if (p >= 1.0) return LogProb::zero();
    double log_p = std::log(p), log_q = std::log1p(-p);
    double mean = static_cast<double>(count) * p;
    if (static_cast<double>(k) <= mean) {
        return LogProb::from_log(log_pmf_range(count, log_p, log_q, 0, static_cast<uint64_t>(k)));
    }
    double upper = log_pmf_range(count, log_p, log_q, static_cast<uint64_t>(k) + 1, count);
    return LogProb::from_log(log1mexp(upper));
}

LogProb binomial_tail_gt_log(uint64_t count, double p, int64_t k) {
    if (k < 0) return LogProb::one();
    if (k >= static_cast<int64_t>(count)) return LogProb::zero();
    if (p <= 0.0) return LogProb::zero();
    if (p >= 1.0) return LogProb::one();
    double log_p = std::log(p), log_q = std::log1p(-p);
    double mean = static_cast<double>(count) * p;
    if (static_cast<double>(k) + 1.0 > mean) {
        return LogProb::from_log(
            log_pmf_range(count, log_p, log_q, static_cast<uint64_t>(k) + 1, count));
    }
    double lower = log_pmf_range(count, log_p, log_q, 0, static_cast<uint64_t>(k));
    return LogProb::from_log(log1mexp(lower));
}

double binomial_tail_gt(uint64_t count, double p, int64_t k) {
    return binomial_tail_gt_log(count, p, k).linear();
}

mpq_class binomial_tail_gt_exact(uint64_t count, const mpq_class& p, int64_t k) {
    if (k < 0) return mpq_class(1);
    if (k >= static_cast<int64_t>(count)) return mpq_class(0);
    if (p <= 0) return mpq_class(0);
    if (p >= 1) return mpq_class(1);
    mpq_class q = mpq_class(1) - p;
    uint64_t uk = static_cast<uint64_t>(k);
    uint64_t lower_terms = uk + 1;
    uint64_t upper_terms = count - uk;
    mpq_class ratio = p / q;

    auto run = [&](uint64_t start, uint64_t terms) {
        // term(start) then term(i+1) = term(i) * (count-i)/(i+1) * p/q
        mpq_class term = mpq_pow(p, start) * mpq_pow(q, count - start);
        mpz_class binom;
        mpz_bin_uiui(binom.get_mpz_t(), static_cast<unsigned long>(count),
                     static_cast<unsigned long>(start));
        term *= binom;
        mpq_class sum = term;
        for (uint64_t i = start; i + 1 < start + terms; ++i) {
            term *= ratio;
            term *= mpq_class(count - i, i + 1);
            sum += term;
        }
        return sum;
    };

    if (upper_terms <= lower_terms) {
        return run(uk + 1, upper_terms);
    }
    return mpq_class(1) - run(0, lower_terms);
}

LogProb dishonest_fraction_bound_log(const SelectionParams& params, double eta) {
    params.validate();
    if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
    int64_t k = floor_nudged(eta * static_cast<double>(params.target));
    return binomial_tail_gt_log(params.dishonest, selection_probability(params), k);
}

double dishonest_fraction_bound(const SelectionParams& params, double eta) {
    return dishonest_fraction_bound_log(params, eta).linear();
}

LogProb secagg_failure_bound_log(const SelectionParams& params, uint64_t threshold_t) {
    params.validate();
    if (2 * threshold_t <= params.target || threshold_t > params.target) {
        throw std::invalid_argument("reconstruction threshold must satisfy s/2 < t <= s");
    }
    int64_t k = static_cast<int64_t>(2 * threshold_t - params.target);
    return binomial_tail_gt_log(params.dishonest, selection_probability(params), k);
}

double secagg_failure_bound(const SelectionParams& params, uint64_t threshold_t) {
    return secagg_failure_bound_log(params, threshold_t).linear();
}

namespace {

mpq_class overselection_probability(uint64_t population, uint64_t target, Ratio alpha) {
    if (population == 0) throw std::invalid_argument("population must be positive");
    mpq_class p = alpha.to_mpq() * target;
    p /= population;
    p.canonicalize();
    if (p > 1) p = 1;  // deterministic eligibility once alpha*s reaches n
    return p;
}

}  // namespace

LogProb overselection_success_log(uint64_t population, uint64_t target, Ratio alpha) {
    mpq_class p = overselection_probability(population, target, alpha);
    if (target == 0) return LogProb::one();
    return binomial_tail_gt_log(population, p.get_d(), static_cast<int64_t>(target) - 1);
}

double overselection_success(uint64_t population, uint64_t target, Ratio alpha) {
    return overselection_success_log(population, target, alpha).linear();
}

mpq_class overselection_success_exact(uint64_t population, uint64_t target, Ratio alpha) {
    mpq_class p = overselection_probability(population, target, alpha);
    if (target == 0) return mpq_class(1);
    return binomial_tail_gt_exact(population, p, static_cast<int64_t>(target) - 1);
}

double multi_round_exposure(const SelectionParams& params, uint64_t k, uint64_t rounds) {
    params.validate();
    if (rounds < 1) throw std::invalid_argument("rounds must be at least 1");
    if (k >= params.dishonest) return 0.0;
    double p = selection_probability(params);
    if (rounds == 1) {
        // Exact identity with the one-shot tail.
        return binomial_tail_gt(params.dishonest, p, static_cast<int64_t>(k));
    }
    double cdf_log = binomial_cdf_log(params.dishonest, p, static_cast<int64_t>(k)).log_e;
    return -std::expm1(static_cast<double>(rounds) * cdf_log);
}

double repeat_selection_bound(const SelectionParams& params, uint64_t rounds, uint64_t r) {
    params.validate();
    if (r > rounds) throw std::invalid_argument("r cannot exceed the round count");
    if (r == rounds) return 0.0;
    double p = selection_probability(params);
    double s = static_cast<double>(params.target);
    double phi = 0.0;
    for (uint64_t j = r + 1; j <= rounds; ++j) {
        double cdf_log =
            binomial_cdf_log(j - 1, p, static_cast<int64_t>(r) - 1).log_e;  // selections so far
        double gamma_log = s * cdf_log;
        phi = -std::expm1(gamma_log + std::log1p(-phi));
    }
    return phi;
}

double repeat_selection_bound_server(const SelectionParams& params, uint64_t rounds, uint64_t r,
                                     uint64_t max_population) {
    params.validate();
    if (max_population < 1) throw std::invalid_argument("population cap must be positive");
    if (r > rounds) throw std::invalid_argument("r cannot exceed the round count");
    if (r == rounds) return 0.0;
    double p = selection_probability(params);
    double cdf_log = binomial_cdf_log(rounds, p, static_cast<int64_t>(r)).log_e;
    return -std::expm1(static_cast<double>(max_population) * cdf_log);
}

void EpsilonParams::validate(bool server_variant) const {
    selection.validate();
    if (2 * secagg_threshold <= selection.target || secagg_threshold > selection.target) {
        throw std::invalid_argument("reconstruction threshold must satisfy s/2 < t <= s");
    }
    if (rounds < 1) throw std::invalid_argument("rounds must be at least 1");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
    if (server_variant && max_population < 1) {
        throw std::invalid_argument("server variant needs a population cap");
    }
}

namespace {

EpsilonResult ddp_epsilon_scan(const EpsilonParams& params, const PrivacyAccountant& accountant,
                               bool server_variant) {
    params.validate(server_variant);
    uint64_t k_cap = 2 * params.secagg_threshold - params.selection.target;
    uint64_t k_max = std::min(params.selection.dishonest, k_cap);

    std::vector<double> exposure(k_max + 1);
    for (uint64_t k = 0; k <= k_max; ++k) {
        exposure[k] = multi_round_exposure(params.selection, k, params.rounds);
    }
    std::vector<double> repeat(params.rounds + 1);
    for (uint64_t r = 0; r <= params.rounds; ++r) {
        repeat[r] = server_variant
                        ? repeat_selection_bound_server(params.selection, params.rounds, r,
                                                        params.max_population)
                        : repeat_selection_bound(params.selection, params.rounds, r);
    }

    EpsilonResult best;
    best.epsilon = std::numeric_limits<double>::infinity();
    for (uint64_t k = 0; k <= k_max; ++k) {
        for (uint64_t r = 0; r <= params.rounds; ++r) {
            double mass = exposure[k] + repeat[r];
            if (!(mass < params.delta)) continue;
            double delta_prime = 1.0 - (1.0 - params.delta) / (1.0 - mass);
            double eps = accountant.epsilon(params.selection.target, k, r, params.sigma,
                                            delta_prime);
            if (!best.feasible || eps < best.epsilon) {
                best = {true, eps, k, r, exposure[k], repeat[r], delta_prime};
            }
        }
    }
    return best;
}

}  // namespace

EpsilonResult ddp_epsilon_client(const EpsilonParams& params, const PrivacyAccountant& accountant) {
    return ddp_epsilon_scan(params, accountant, false);
}

EpsilonResult ddp_epsilon_server(const EpsilonParams& params, const PrivacyAccountant& accountant) {
    return ddp_epsilon_scan(params, accountant, true);
}

}  // namespace sortition::bounds
