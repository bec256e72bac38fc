#include "sortition/simharness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "sortition/rng.hpp"

namespace sortition::sim {

std::string_view strategy_kind_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::HonestServer: return "honest-server";
        case StrategyKind::BiasedFinalize: return "biased-finalize";
        case StrategyKind::OmitHonestClaims: return "omit-honest-claims";
        case StrategyKind::InconsistentLists: return "inconsistent-lists";
        case StrategyKind::ForgeRandomness: return "forge-randomness";
        case StrategyKind::AnnounceN: return "announce-n";
        case StrategyKind::AdversarialRefiner: return "adversarial-refiner";
        case StrategyKind::DelayClaims: return "delay-claims";
    }
    return "?";
}

StrategyKind strategy_kind_by_name(std::string_view name) {
    for (int k = 0; k <= static_cast<int>(StrategyKind::DelayClaims); ++k)
        if (strategy_kind_name(static_cast<StrategyKind>(k)) == name)
            return static_cast<StrategyKind>(k);
    throw std::invalid_argument("unknown strategy: " + std::string(name));
}

void StrategySpec::validate() const {
    if (fraction < 0.0 || fraction > 1.0)
        throw std::invalid_argument("strategy fraction must lie in [0, 1]");
    if (kind == StrategyKind::AdversarialRefiner && exclusion.num >= exclusion.den)
        throw std::invalid_argument("adversarial exclusion must be below 1");
    if (kind == StrategyKind::AnnounceN && value == 0)
        throw std::invalid_argument("announced population must be positive");
}

// ---------------------------------------------------------------------------
// Universe

Universe Universe::build(const PopulationSpec& spec, const CryptoSuite& crypto) {
    if (spec.dishonest > spec.size)
        throw std::invalid_argument("dishonest count exceeds population");
    Universe u;
    u.clients.reserve(spec.size);
    std::vector<uint64_t> ids(spec.size);
    for (uint64_t i = 0; i < spec.size; ++i) ids[i] = i + 1;

    // dishonest ids: seeded partial shuffle over the id list
    std::vector<uint64_t> pool = ids;
    DetRng pick(DetRng::derive(spec.seed, 0xd157));
    for (uint64_t i = 0; i < spec.dishonest; ++i) {
        uint64_t j = i + pick.below(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    u.dishonest_ids.assign(pool.begin(), pool.begin() + spec.dishonest);
    std::sort(u.dishonest_ids.begin(), u.dishonest_ids.end());

    for (uint64_t i = 0; i < spec.size; ++i) {
        protocol::ClientState c;
        c.client_id = ids[i];
        Bytes32 vseed{}, sseed{};
        DetRng rv(DetRng::derive(spec.seed, 2 * i));
        rv.fill(vseed.data(), vseed.size());
        DetRng rs(DetRng::derive(spec.seed, 2 * i + 1));
        rs.fill(sseed.data(), sseed.size());
        c.draw = crypto.vrf->keygen(vseed);
        c.account = crypto.sig->keygen(sseed);
        c.dishonest = std::binary_search(u.dishonest_ids.begin(), u.dishonest_ids.end(), ids[i]);
        u.registry.enroll({c.client_id, c.account.public_key, c.draw.public_key});
        u.clients.push_back(std::move(c));
    }
    u.utilities = refine::synth_population(ids, DetRng::derive(spec.seed, 0x2e71), spec.zipf_a);
    return u;
}

// ---------------------------------------------------------------------------
// Strategies

namespace {

using protocol::ParticipantRecord;
using protocol::ParticipantSet;
using protocol::ParticipationClaim;
using protocol::RoundEnv;
using protocol::ServerBehavior;

class BiasedFinalizeBehavior final : public ServerBehavior {
  public:
    std::string_view name() const override { return "biased-finalize"; }
    std::optional<ParticipantSet> finalize(const std::vector<ParticipationClaim>& candidates,
                                           RoundEnv& env) override {
        std::vector<const ParticipationClaim*> bad, good;
        for (const auto& c : candidates)
            (env.is_dishonest(c.client_id) ? bad : good).push_back(&c);
        const uint64_t s = env.config.target;
        std::vector<const ParticipationClaim*> chosen;
        auto take = [&](std::vector<const ParticipationClaim*>& from, uint64_t count) {
            for (uint64_t i = 0; i < count; ++i) {
                uint64_t j = i + env.rng.below(from.size() - i);
                std::swap(from[i], from[j]);
                chosen.push_back(from[i]);
            }
        };
        if (bad.size() >= s) {
            take(bad, s);
        } else {
            chosen.insert(chosen.end(), bad.begin(), bad.end());
            take(good, s - bad.size());
        }
        std::vector<ParticipantRecord> records;
        records.reserve(s);
        for (const ParticipationClaim* c : chosen)
            records.push_back(ParticipantRecord{c->client_id,
                                                env.registry.at(c->client_id).account_key,
                                                c->beta, c->proof});
        return ParticipantSet::assemble(env.config.round, std::move(records));
    }
};

class OmitHonestClaimsBehavior final : public ServerBehavior {
  public:
    explicit OmitHonestClaimsBehavior(double fraction) : fraction_(fraction) {}
    std::string_view name() const override { return "omit-honest-claims"; }
    void filter_candidates(std::vector<ParticipationClaim>& candidates, RoundEnv& env) override {
        std::vector<ParticipationClaim> kept;
        kept.reserve(candidates.size());
        for (const auto& c : candidates) {
            if (!env.is_dishonest(c.client_id) && env.rng.unit() < fraction_) continue;
            kept.push_back(c);
        }
        candidates.swap(kept);
    }

  private:
    double fraction_;
};

class InconsistentListsBehavior final : public ServerBehavior {
  public:
    std::string_view name() const override { return "inconsistent-lists"; }
    void make_variants(std::vector<ParticipantSet>& variants,
                       const std::vector<ParticipationClaim>& unselected,
                       RoundEnv& env) override {
        ParticipantSet alt = variants[0];
        if (!unselected.empty()) {
            const ParticipationClaim& spare = unselected[env.rng.below(unselected.size())];
            size_t victim = env.rng.below(alt.members.size());
            alt.members[victim] =
                ParticipantRecord{spare.client_id, env.registry.at(spare.client_id).account_key,
                                  spare.beta, spare.proof};
            alt = ParticipantSet::assemble(alt.round, std::move(alt.members));
        } else {
            // no spare candidate: diverge one member's randomness bytes
            size_t victim = env.rng.below(alt.members.size());
            alt.members[victim].beta[31] ^= 1;
        }
        variants.push_back(std::move(alt));

        // Split honest members across the two lists so each side is missing
        // at least one signature over its own bytes whenever two or more
        // honest members exist.
        assign_.clear();
        std::unordered_set<uint64_t> in0, in1;
        for (const auto& rec : variants[0].members) in0.insert(rec.client_id);
        for (const auto& rec : variants[1].members) in1.insert(rec.client_id);
        size_t honest_rank = 0;
        auto place = [&](uint64_t id) {
            if (assign_.count(id)) return;
            bool a = in0.count(id), b = in1.count(id);
            if (a && !b) assign_[id] = 0;
            else if (!a && b) assign_[id] = 1;
            else if (env.is_dishonest(id)) assign_[id] = 0;
            else assign_[id] = honest_rank++ % 2;
        };
        for (const auto& rec : variants[0].members) place(rec.client_id);
        for (const auto& rec : variants[1].members) place(rec.client_id);
    }
    size_t variant_for(uint64_t member_id, size_t, RoundEnv&) override {
        auto it = assign_.find(member_id);
        return it == assign_.end() ? 0 : it->second;
    }

  private:
    std::unordered_map<uint64_t, size_t> assign_;
};

class ForgeRandomnessBehavior final : public ServerBehavior {
  public:
    std::string_view name() const override { return "forge-randomness"; }
    void make_variants(std::vector<ParticipantSet>& variants,
                       const std::vector<ParticipationClaim>&, RoundEnv& env) override {
        ParticipantSet& set = variants[0];
        protocol::Threshold thr =
            protocol::selection_threshold(env.clients.size(), env.config);

        // a population client outside the set, if one exists
        std::vector<uint64_t> outside;
        for (const auto& c : env.clients) {
            bool member = false;
            for (const auto& rec : set.members) member = member || rec.client_id == c.client_id;
            if (!member) outside.push_back(c.client_id);
        }
        size_t victim = env.rng.below(set.members.size());
        Bytes32 beta = fabricate_eligible(thr, env);
        Bytes80 proof{};
        env.rng.fill(proof.data(), proof.size());
        if (!outside.empty()) {
            uint64_t id = outside[env.rng.below(outside.size())];
            set.members[victim] =
                ParticipantRecord{id, env.registry.at(id).account_key, beta, proof};
            set = ParticipantSet::assemble(set.round, std::move(set.members));
        } else {
            set.members[victim].beta = beta;
            set.members[victim].proof = proof;
        }
    }

  private:
    static Bytes32 fabricate_eligible(const protocol::Threshold& thr, RoundEnv& env) {
        Bytes32 raw{};
        env.rng.fill(raw.data(), raw.size());
        if (thr.all) return raw;
        mpz_class value = beta_to_int(raw) % beta_to_int(thr.limit);
        Bytes32 out{};
        if (value > 0) {
            size_t nbytes = (mpz_sizeinbase(value.get_mpz_t(), 2) + 7) / 8;
            size_t written = 0;
            mpz_export(out.data() + (32 - nbytes), &written, 1, 1, 1, 0, value.get_mpz_t());
        }
        return out;
    }
};

class AnnounceNBehavior final : public ServerBehavior {
  public:
    explicit AnnounceNBehavior(uint64_t value) : value_(value) {}
    std::string_view name() const override { return "announce-n"; }
    uint64_t announce_population(uint64_t, RoundEnv&) override { return value_; }

  private:
    uint64_t value_;
};

class DelayClaimsBehavior final : public ServerBehavior {
  public:
    DelayClaimsBehavior(double fraction, uint64_t ticks) : fraction_(fraction), ticks_(ticks) {}
    std::string_view name() const override { return "delay-claims"; }
    uint64_t claim_tick(uint64_t client_id, RoundEnv& env) override {
        if (env.is_dishonest(client_id)) return 0;
        return env.rng.unit() < fraction_ ? ticks_ : 0;
    }

  private:
    double fraction_;
    uint64_t ticks_;
};

}  // namespace

std::unique_ptr<protocol::ServerBehavior> make_behavior(const StrategySpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case StrategyKind::HonestServer:
        case StrategyKind::AdversarialRefiner:  // acts on the population, not the round
            return std::make_unique<protocol::ServerBehavior>();
        case StrategyKind::BiasedFinalize:
            return std::make_unique<BiasedFinalizeBehavior>();
        case StrategyKind::OmitHonestClaims:
            return std::make_unique<OmitHonestClaimsBehavior>(spec.fraction);
        case StrategyKind::InconsistentLists:
            return std::make_unique<InconsistentListsBehavior>();
        case StrategyKind::ForgeRandomness:
            return std::make_unique<ForgeRandomnessBehavior>();
        case StrategyKind::AnnounceN:
            return std::make_unique<AnnounceNBehavior>(spec.value);
        case StrategyKind::DelayClaims:
            return std::make_unique<DelayClaimsBehavior>(
                spec.fraction, spec.value == 0 ? ~uint64_t{0} : spec.value);
    }
    throw std::invalid_argument("unhandled strategy kind");
}

protocol::RoundOutcome run_round(const std::vector<protocol::ClientState>& population,
                                 const protocol::Registry& registry,
                                 const protocol::ProtocolConfig& config,
                                 const StrategySpec& strategy, const CryptoSuite& crypto,
                                 uint64_t seed, std::vector<std::string>* transcript) {
    auto behavior = make_behavior(strategy);
    DetRng rng(seed);
    return protocol::run_full_round(population, registry, config, *behavior, crypto, rng,
                                    transcript);
}

// ---------------------------------------------------------------------------
// Monte Carlo

namespace {

struct TrialResult {
    bool server_aborted = false;
    protocol::AbortReason server_reason = protocol::AbortReason::NotEnoughCandidates;
    bool finalized = false;
    bool honest_finalized = false;
    bool agreement = true;
    bool enough_candidates = false;
    bool soundness_ok = true;
    uint64_t x = 0;
    uint64_t candidates = 0;
    protocol::MessageStats stats;
    std::vector<protocol::AbortReason> honest_failures;
    std::vector<std::string> transcript;
};

}  // namespace

MonteCarloReport monte_carlo(const CampaignConfig& campaign) {
    if (campaign.trials == 0) throw std::invalid_argument("trials must be >= 1");
    campaign.config.validate();
    campaign.strategy.validate();
    const CryptoSuite& crypto = crypto_by_name(campaign.crypto);
    Universe universe = Universe::build(campaign.population, crypto);

    // population the rounds actually run over, after any pre-round filtering
    std::vector<protocol::ClientState> population = universe.clients;
    if (campaign.strategy.kind == StrategyKind::AdversarialRefiner) {
        using u128 = unsigned __int128;
        const Ratio d = campaign.strategy.exclusion;
        uint64_t k = static_cast<uint64_t>((u128(d.num) * population.size()) / d.den);
        std::vector<protocol::ClientState> kept;
        kept.reserve(population.size());
        uint64_t removed = 0;
        for (const auto& c : population) {
            if (!c.dishonest && removed < k) {
                removed++;
                continue;
            }
            kept.push_back(c);
        }
        if (removed < k)
            throw std::invalid_argument("adversarial refiner cannot remove enough honest clients");
        population.swap(kept);
    } else if (campaign.refine.enabled) {
        auto excluded = refine::select_excluded(universe.utilities, campaign.refine.params);
        std::vector<protocol::ClientState> kept;
        kept.reserve(population.size());
        for (const auto& c : population)
            if (!std::binary_search(excluded.begin(), excluded.end(), c.client_id))
                kept.push_back(c);
        population.swap(kept);
    }

    std::vector<TrialResult> results(campaign.trials);
    std::atomic<uint64_t> next{0};
    auto work = [&]() {
        for (;;) {
            uint64_t t = next.fetch_add(1);
            if (t >= campaign.trials) break;
            protocol::ProtocolConfig cfg = campaign.config;
            cfg.round = campaign.config.round + t;
            auto behavior = make_behavior(campaign.strategy);
            DetRng rng(DetRng::derive(campaign.seed, t));
            TrialResult& r = results[t];
            std::vector<std::string>* sink = campaign.keep_transcript ? &r.transcript : nullptr;
            protocol::RoundOutcome out = protocol::run_full_round(
                population, universe.registry, cfg, *behavior, crypto, rng, sink);
            r.server_aborted = out.server_aborted;
            r.server_reason = out.server_reason;
            r.finalized = out.finalized;
            r.honest_finalized = out.honest_finalized;
            r.agreement = out.agreement;
            r.enough_candidates = out.candidate_count >= cfg.target;
            r.x = out.dishonest_in_final;
            r.candidates = out.candidate_count;
            r.stats = out.stats;
            for (const auto& [id, verdict] : out.honest_verdicts)
                if (!verdict.ok) r.honest_failures.push_back(verdict.reason);
            if (out.honest_finalized) {
                // no strategy may get a bad set past an honest verifier
                auto check = protocol::verify_set_common(*out.finalized_set,
                                                         out.announced_population, cfg,
                                                         universe.registry, crypto);
                r.soundness_ok = check.ok && out.finalized_set->members.size() == cfg.target;
            }
        }
    };
    unsigned nworkers = campaign.workers == 0 ? 1 : campaign.workers;
    nworkers = static_cast<unsigned>(
        std::min<uint64_t>(nworkers, campaign.trials));
    if (nworkers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nworkers);
        for (unsigned i = 0; i < nworkers; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    MonteCarloReport report;
    report.trials = campaign.trials;
    report.x_histogram.assign(campaign.config.target + 1, 0);
    uint64_t x_total = 0;
    for (const TrialResult& r : results) {
        if (r.server_aborted) {
            report.server_aborts++;
            report.server_abort_reasons[std::string(protocol::abort_reason_name(
                r.server_reason))]++;
        }
        if (r.finalized) {
            report.finalized++;
            report.x_histogram[std::min<uint64_t>(r.x, campaign.config.target)]++;
            x_total += r.x;
        }
        if (r.honest_finalized) report.honest_finalizations++;
        if (r.enough_candidates) report.enough_candidate_rounds++;
        if (!r.agreement) report.agreement_violations++;
        if (!r.soundness_ok) report.soundness_violations++;
        for (protocol::AbortReason reason : r.honest_failures)
            report.honest_abort_reasons[std::string(protocol::abort_reason_name(reason))]++;
        report.stats.merge(r.stats);
        if (campaign.keep_transcript)
            report.transcript.insert(report.transcript.end(), r.transcript.begin(),
                                     r.transcript.end());
    }
    report.mean_x = report.finalized ? static_cast<double>(x_total) / report.finalized : 0.0;

    report.population = campaign.population.size;
    report.dishonest = campaign.population.dishonest;
    report.population_after_refine = population.size();
    uint64_t bad_after = 0;
    for (const auto& c : population) bad_after += c.dishonest ? 1 : 0;
    report.dishonest_after_refine = bad_after;
    report.target = campaign.config.target;
    report.over_selection = campaign.config.over_selection;
    report.population_floor = campaign.config.population_floor;
    report.strategy = std::string(strategy_kind_name(campaign.strategy.kind));
    report.crypto = campaign.crypto;
    report.base_seed = campaign.seed;
    report.base_round = campaign.config.round;
    return report;
}

std::vector<BoundCheckRow> compare_to_bound(const MonteCarloReport& report,
                                            const bounds::SelectionParams& params,
                                            const std::vector<double>& etas) {
    if (report.trials == 0) throw std::invalid_argument("report has zero trials");
    if (report.finalized == 0) throw std::invalid_argument("report has no finalized rounds");
    if (params.target != report.target)
        throw std::invalid_argument("target mismatch between report and params");
    if (params.dishonest != report.dishonest_after_refine)
        throw std::invalid_argument("dishonest-count mismatch between report and params");
    using u128 = unsigned __int128;
    if (u128(params.over_selection.num) * report.over_selection.den !=
        u128(params.over_selection.den) * report.over_selection.num)
        throw std::invalid_argument("over-selection mismatch between report and params");
    // the analytic bound is the worst case over n >= n_min; the empirical
    // run is calibrated only when the floor is the actual population
    if (params.population_floor != report.population_after_refine)
        throw std::invalid_argument("population floor must equal the simulated population");

    std::vector<BoundCheckRow> rows;
    rows.reserve(etas.size());
    for (double eta : etas) {
        BoundCheckRow row;
        row.eta = eta;
        row.threshold = static_cast<uint64_t>(
            std::floor(eta * static_cast<double>(params.target) + 1e-9));
        row.finalized = report.finalized;
        for (size_t x = 0; x < report.x_histogram.size(); ++x)
            if (x > row.threshold) row.exceed += report.x_histogram[x];
        row.empirical = static_cast<double>(row.exceed) / static_cast<double>(report.finalized);
        row.bound = bounds::dishonest_fraction_bound(params, eta);
        row.sigma = std::sqrt(row.bound * (1.0 - row.bound) /
                              static_cast<double>(report.trials));
        row.pass = row.empirical <= row.bound + 3.0 * row.sigma;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace sortition::sim
