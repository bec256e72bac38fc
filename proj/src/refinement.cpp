#include "sortition/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "sortition/rng.hpp"

namespace sortition::refine {

double data_quality(const ClientUtility& u) {
    return static_cast<double>(u.dataset_size) * u.loss_rms;
}

double oort_score(const ClientUtility& u, double deadline, double penalty) {
    if (u.latency <= 0.0 || deadline <= 0.0)
        throw std::invalid_argument("latency and deadline must be positive");
    double score = data_quality(u);
    if (u.latency > deadline) score *= std::pow(deadline / u.latency, penalty);
    return score;
}

std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Or: return "or";
        case Strategy::And: return "and";
        case Strategy::Joint: return "joint";
    }
    return "?";
}

Strategy strategy_by_name(std::string_view name) {
    if (name == "or") return Strategy::Or;
    if (name == "and") return Strategy::And;
    if (name == "joint") return Strategy::Joint;
    throw std::invalid_argument("unknown refinement strategy: " + std::string(name));
}

std::vector<uint64_t> select_excluded(const std::vector<ClientUtility>& population,
                                      const RefineParams& params) {
    const size_t n = population.size();
    const Ratio d = params.exclusion;
    if (d.den == 0) throw std::invalid_argument("exclusion fraction with zero denominator");
    if (d.num > d.den) throw std::invalid_argument("exclusion fraction above 1");
    using u128 = unsigned __int128;
    const size_t k = static_cast<size_t>((u128(d.num) * n) / d.den);
    if (n > 0 && k == n) throw std::invalid_argument("exclusion fraction removes everyone");
    std::vector<uint64_t> out;
    if (k == 0 || n == 0) return out;

    std::vector<size_t> by_speed(n), by_quality(n);
    std::iota(by_speed.begin(), by_speed.end(), 0);
    by_quality = by_speed;
    std::sort(by_speed.begin(), by_speed.end(), [&](size_t a, size_t b) {
        if (population[a].latency != population[b].latency)
            return population[a].latency > population[b].latency;  // slowest first
        return population[a].client_id < population[b].client_id;
    });
    std::sort(by_quality.begin(), by_quality.end(), [&](size_t a, size_t b) {
        double qa = data_quality(population[a]), qb = data_quality(population[b]);
        if (qa != qb) return qa < qb;  // worst quality first
        return population[a].client_id < population[b].client_id;
    });

    if (params.strategy == Strategy::Joint) {
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            double sa = oort_score(population[a], params.deadline, params.penalty);
            double sb = oort_score(population[b], params.deadline, params.penalty);
            if (sa != sb) return sa < sb;
            return population[a].client_id < population[b].client_id;
        });
        for (size_t i = 0; i < k; ++i) out.push_back(population[order[i]].client_id);
        std::sort(out.begin(), out.end());
        return out;
    }

    std::unordered_set<size_t> slow(by_speed.begin(), by_speed.begin() + k);
    std::unordered_set<size_t> poor(by_quality.begin(), by_quality.begin() + k);

    if (params.strategy == Strategy::And) {
        for (size_t idx : slow)
            if (poor.count(idx)) out.push_back(population[idx].client_id);
        std::sort(out.begin(), out.end());
        return out;
    }

    // Or: union, optionally capped back to k by the worst rank sum.
    std::vector<size_t> merged;
    for (size_t idx = 0; idx < n; ++idx)
        if (slow.count(idx) || poor.count(idx)) merged.push_back(idx);
    if (!params.capped || merged.size() <= k) {
        for (size_t idx : merged) out.push_back(population[idx].client_id);
        std::sort(out.begin(), out.end());
        return out;
    }
    std::vector<size_t> speed_rank(n), quality_rank(n);
    for (size_t pos = 0; pos < n; ++pos) {
        speed_rank[by_speed[pos]] = pos;
        quality_rank[by_quality[pos]] = pos;
    }
    std::sort(merged.begin(), merged.end(), [&](size_t a, size_t b) {
        size_t ra = speed_rank[a] + quality_rank[a];
        size_t rb = speed_rank[b] + quality_rank[b];
        if (ra != rb) return ra < rb;  // worst combined rank first
        return population[a].client_id < population[b].client_id;
    });
    for (size_t i = 0; i < k; ++i) out.push_back(population[merged[i]].client_id);
    std::sort(out.begin(), out.end());
    return out;
}

mpq_class worst_case_base_rate_exact(uint64_t dishonest, uint64_t population, Ratio exclusion) {
    if (population == 0) throw std::invalid_argument("empty population");
    if (exclusion.num >= exclusion.den)
        throw std::invalid_argument("exclusion fraction must be below 1");
    // c / (n * (1 - d)) = c * den / (n * (den - num))
    mpq_class rate(mpz_class((unsigned long)dishonest) * (unsigned long)exclusion.den,
                   mpz_class((unsigned long)population) *
                       (unsigned long)(exclusion.den - exclusion.num));
    rate.canonicalize();
    if (rate > 1) rate = 1;
    return rate;
}

double worst_case_base_rate(uint64_t dishonest, uint64_t population, Ratio exclusion) {
    return worst_case_base_rate_exact(dishonest, population, exclusion).get_d();
}

double zipf_quality_gain(double exclusion, double power) {
    if (exclusion < 0.0 || exclusion >= 1.0)
        throw std::invalid_argument("exclusion fraction must lie in [0, 1)");
    return std::pow(1.0 - exclusion, -power);
}

std::vector<ClientUtility> synth_population(const std::vector<uint64_t>& ids, uint64_t seed,
                                            double zipf_a) {
    const size_t n = ids.size();
    DetRng rng(seed);
    std::vector<uint64_t> rank(n);
    std::iota(rank.begin(), rank.end(), 1);  // 1 = slowest
    for (size_t i = 0; i + 1 < n; ++i) {
        size_t j = i + rng.below(n - i);
        std::swap(rank[i], rank[j]);
    }
    std::vector<ClientUtility> out(n);
    for (size_t i = 0; i < n; ++i) {
        out[i].client_id = ids[i];
        out[i].latency = 10.0 * std::pow(static_cast<double>(rank[i]), -zipf_a);
        out[i].dataset_size = 10 + rng.below(991);
        out[i].loss_rms = 0.5 + rng.unit() * 3.5;
    }
    return out;
}

}  // namespace sortition::refine
