#include "sortition/protocol.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "sortition/bounds.hpp"

namespace sortition::protocol {

std::string_view variant_name(Variant v) {
    return v == Variant::ClientDraw ? "client-draw" : "server-draw";
}

Variant variant_by_name(std::string_view name) {
    if (name == "client-draw") return Variant::ClientDraw;
    if (name == "server-draw") return Variant::ServerDraw;
    throw std::invalid_argument("unknown variant: " + std::string(name));
}

void ProtocolConfig::validate() const {
    if (target == 0) throw std::invalid_argument("target must be >= 1");
    if (population_floor < target) throw std::invalid_argument("population floor below target");
    if (over_selection.num < over_selection.den)
        throw std::invalid_argument("over-selection factor below 1");
    using u128 = unsigned __int128;
    if (u128(over_selection.num) * target > u128(population_floor) * over_selection.den)
        throw std::invalid_argument("over-selection * target exceeds population floor");
}

std::string_view abort_reason_name(AbortReason reason) {
    switch (reason) {
        case AbortReason::PopulationTooSmall: return "PopulationTooSmall";
        case AbortReason::NotEnoughCandidates: return "NotEnoughCandidates";
        case AbortReason::SelfMissing: return "SelfMissing";
        case AbortReason::WrongSetSize: return "WrongSetSize";
        case AbortReason::BadRandomness: return "BadRandomness";
        case AbortReason::BadProof: return "BadProof";
        case AbortReason::BadPrfValue: return "BadPrfValue";
        case AbortReason::SignatureInvalid: return "SignatureInvalid";
        case AbortReason::InconsistentSets: return "InconsistentSets";
        case AbortReason::Timeout: return "Timeout";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Registry

void Registry::enroll(const ClientRegistration& reg) {
    auto it = std::lower_bound(
        by_id_.begin(), by_id_.end(), reg.client_id,
        [](const ClientRegistration& a, uint64_t id) { return a.client_id < id; });
    if (it != by_id_.end() && it->client_id == reg.client_id)
        throw std::invalid_argument("client id already enrolled: " + std::to_string(reg.client_id));
    by_id_.insert(it, reg);
    log_.push_back(reg);
}

const ClientRegistration* Registry::find(uint64_t client_id) const {
    auto it = std::lower_bound(
        by_id_.begin(), by_id_.end(), client_id,
        [](const ClientRegistration& a, uint64_t id) { return a.client_id < id; });
    if (it != by_id_.end() && it->client_id == client_id) return &*it;
    return nullptr;
}

const ClientRegistration& Registry::at(uint64_t client_id) const {
    if (const ClientRegistration* p = find(client_id)) return *p;
    throw std::out_of_range("unregistered client id: " + std::to_string(client_id));
}

// ---------------------------------------------------------------------------
// Participant sets and encoding

ParticipantSet ParticipantSet::assemble(uint64_t round, std::vector<ParticipantRecord> records) {
    std::sort(records.begin(), records.end(),
              [](const ParticipantRecord& a, const ParticipantRecord& b) {
                  return a.client_id < b.client_id;
              });
    for (size_t i = 1; i < records.size(); ++i)
        if (records[i].client_id == records[i - 1].client_id)
            throw std::invalid_argument("duplicate participant id: " +
                                        std::to_string(records[i].client_id));
    return ParticipantSet{round, std::move(records)};
}

uint64_t encoded_set_bytes(uint64_t member_count, Variant variant) {
    uint64_t rec = variant == Variant::ClientDraw ? kRecordBytesClientDraw : kRecordBytesServerDraw;
    return 16 + member_count * rec;
}

uint64_t selection_notice_bytes(uint64_t member_count, Variant variant) {
    // ServerDraw carries the claimed population; ClientDraw recipients reuse
    // the stage-1 announcement and the wire stays proof-bearing instead.
    return encoded_set_bytes(member_count, variant) + (variant == Variant::ServerDraw ? 8 : 0);
}

uint64_t bundle_bytes(uint64_t share_count) { return 8 + share_count * kSignatureShareBytes; }

Bytes canonical_encode(const ParticipantSet& set, Variant variant) {
    Bytes out;
    out.reserve(encoded_set_bytes(set.members.size(), variant));
    append(out, be64(set.round));
    append(out, be64(set.members.size()));
    const ParticipantRecord* prev = nullptr;
    for (const ParticipantRecord& rec : set.members) {
        if (prev && prev->client_id >= rec.client_id)
            throw std::invalid_argument("participant set unsorted or duplicated");
        prev = &rec;
        append(out, be64(rec.client_id));
        append(out, rec.account_key);
        append(out, rec.beta);
        if (variant == Variant::ClientDraw) append(out, rec.proof);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Eligibility

Threshold selection_threshold(uint64_t population, const ProtocolConfig& config) {
    Threshold t;
    if (population == 0) return t;  // nobody eligible
    mpz_class limit =
        bounds::eligibility_threshold(mpz_class(static_cast<unsigned long>(population)),
                                      config.target, config.over_selection);
    if (limit >= bounds::randomness_domain()) {
        t.all = true;
        return t;
    }
    if (limit == 0) return t;
    size_t bytes = (mpz_sizeinbase(limit.get_mpz_t(), 2) + 7) / 8;
    size_t written = 0;
    mpz_export(t.limit.data() + (32 - bytes), &written, 1, 1, 1, 0, limit.get_mpz_t());
    return t;
}

// ---------------------------------------------------------------------------
// Client-side steps

SampleResult client_self_sample(const ClientState& client, const RoundAnnouncement& ann,
                                const ProtocolConfig& config, const CryptoSuite& crypto,
                                bool enforce_floor) {
    SampleResult res;
    if (enforce_floor && ann.population < config.population_floor) {
        res.outcome = SampleOutcome::Abort;
        res.reason = AbortReason::PopulationTooSmall;
        return res;
    }
    Threshold thr = selection_threshold(ann.population, config);
    auto msg = encode_round(ann.round);
    if (auto cheap = crypto.vrf->eval_beta_cheap(client.draw, msg)) {
        if (!eligible_beta(*cheap, thr)) return res;  // Decline, no proof needed
    }
    VrfOutput out = crypto.vrf->eval(client.draw, msg);
    if (!eligible_beta(out.beta, thr)) return res;
    res.outcome = SampleOutcome::Claim;
    res.claim = ParticipationClaim{client.client_id, out.beta, out.proof};
    return res;
}

OwnRecord own_record_client_draw(const ClientState& client, const ParticipationClaim& claim) {
    return OwnRecord{client.account.public_key, claim.beta, claim.proof, true};
}

OwnRecord own_record_server_draw(const ClientState& client, uint64_t round) {
    OwnRecord own;
    own.account_key = client.account.public_key;
    own.beta = prf_eval(client.draw.public_key, encode_round(round));
    own.has_proof = false;
    return own;
}

Verdict verify_set_common(const ParticipantSet& set, uint64_t announced_population,
                          const ProtocolConfig& config, const Registry& registry,
                          const CryptoSuite& crypto) {
    if (set.round != config.round)
        return Verdict::fail(AbortReason::BadRandomness,
                             "set round " + std::to_string(set.round) + " expected " +
                                 std::to_string(config.round));
    if (set.members.size() != config.target)
        return Verdict::fail(AbortReason::WrongSetSize,
                             "expected " + std::to_string(config.target) + " members, got " +
                                 std::to_string(set.members.size()));
    if (announced_population < config.population_floor)
        return Verdict::fail(AbortReason::PopulationTooSmall,
                             "population " + std::to_string(announced_population) + " below floor " +
                                 std::to_string(config.population_floor));
    Threshold thr = selection_threshold(announced_population, config);
    auto msg = encode_round(set.round);
    const ParticipantRecord* prev = nullptr;
    for (const ParticipantRecord& rec : set.members) {
        std::string who = std::to_string(rec.client_id);
        if (prev && prev->client_id >= rec.client_id)
            return Verdict::fail(AbortReason::WrongSetSize, "members unsorted or duplicated");
        prev = &rec;
        const ClientRegistration* reg = registry.find(rec.client_id);
        if (!reg)
            return Verdict::fail(AbortReason::BadRandomness, "unregistered member " + who);
        if (reg->account_key != rec.account_key)
            return Verdict::fail(AbortReason::BadRandomness, "account key mismatch for " + who);
        if (config.variant == Variant::ClientDraw) {
            if (!eligible_beta(rec.beta, thr))
                return Verdict::fail(AbortReason::BadRandomness,
                                     "randomness above threshold for " + who);
            if (!crypto.vrf->verify(reg->draw_key, msg, rec.beta, rec.proof))
                return Verdict::fail(AbortReason::BadProof, "proof rejected for " + who);
        } else {
            if (prf_eval(reg->draw_key, msg) != rec.beta)
                return Verdict::fail(AbortReason::BadPrfValue,
                                     "recomputed randomness differs for " + who);
            if (!eligible_beta(rec.beta, thr))
                return Verdict::fail(AbortReason::BadRandomness,
                                     "randomness above threshold for " + who);
        }
    }
    return Verdict::pass();
}

Verdict client_verify_outcome(uint64_t self_id, const OwnRecord& own, const ParticipantSet& set,
                              uint64_t announced_population, const ProtocolConfig& config,
                              const Registry& registry, const CryptoSuite& crypto,
                              const Verdict* common) {
    const ParticipantRecord* mine = nullptr;
    for (const ParticipantRecord& rec : set.members)
        if (rec.client_id == self_id) {
            mine = &rec;
            break;
        }
    if (!mine) return Verdict::fail(AbortReason::SelfMissing, "own id absent");
    if (mine->account_key != own.account_key || mine->beta != own.beta ||
        (own.has_proof && mine->proof != own.proof))
        return Verdict::fail(AbortReason::SelfMissing, "own record bytes differ");
    if (common) return *common;
    return verify_set_common(set, announced_population, config, registry, crypto);
}

Bytes64 client_sign_outcome(const ClientState& client, const ParticipantSet& set,
                            const ProtocolConfig& config, const CryptoSuite& crypto) {
    return crypto.sig->sign(client.account, canonical_encode(set, config.variant));
}

Verdict client_consistency_check(const ParticipantSet& accepted, const SignatureBundle& bundle,
                                 const ProtocolConfig& config, const Registry& registry,
                                 const CryptoSuite& crypto) {
    if (bundle.round != accepted.round)
        return Verdict::fail(AbortReason::InconsistentSets, "bundle round differs");
    std::vector<uint64_t> ids;
    ids.reserve(bundle.shares.size());
    for (const SignatureShare& sh : bundle.shares) ids.push_back(sh.client_id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        return Verdict::fail(AbortReason::InconsistentSets, "duplicate signer");
    bool same = ids.size() == accepted.members.size();
    for (size_t i = 0; same && i < ids.size(); ++i)
        same = ids[i] == accepted.members[i].client_id;
    if (!same)
        return Verdict::fail(AbortReason::InconsistentSets, "signer ids differ from accepted set");
    Bytes enc = canonical_encode(accepted, config.variant);
    for (const SignatureShare& sh : bundle.shares) {
        const ClientRegistration* reg = registry.find(sh.client_id);
        if (!reg)
            return Verdict::fail(AbortReason::SignatureInvalid,
                                 "unregistered signer " + std::to_string(sh.client_id));
        if (!crypto.sig->verify(reg->account_key, enc, sh.signature))
            return Verdict::fail(AbortReason::SignatureInvalid,
                                 "signature rejected for " + std::to_string(sh.client_id));
    }
    return Verdict::pass();
}

// ---------------------------------------------------------------------------
// Server-side steps

std::vector<ParticipationClaim> server_collect_candidates(const std::vector<TimedClaim>& claims,
                                                          uint64_t announced_population,
                                                          const ProtocolConfig& config,
                                                          const Registry& registry,
                                                          const CryptoSuite& crypto,
                                                          CollectStats* stats) {
    CollectStats local;
    Threshold thr = selection_threshold(announced_population, config);
    auto msg = encode_round(config.round);
    std::vector<ParticipationClaim> out;
    std::unordered_set<uint64_t> seen;
    seen.reserve(claims.size() * 2);
    for (const TimedClaim& tc : claims) {
        if (tc.tick > config.timeout_ticks) {
            local.dropped_late++;
            continue;
        }
        if (!seen.insert(tc.claim.client_id).second) {
            local.dropped_duplicate++;
            continue;
        }
        const ClientRegistration* reg = registry.find(tc.claim.client_id);
        if (!reg || !eligible_beta(tc.claim.beta, thr)) {
            local.dropped_invalid++;
            continue;
        }
        if (config.variant == Variant::ClientDraw &&
            !crypto.vrf->verify(reg->draw_key, msg, tc.claim.beta, tc.claim.proof)) {
            local.dropped_invalid++;
            continue;
        }
        out.push_back(tc.claim);
    }
    std::sort(out.begin(), out.end(), [](const ParticipationClaim& a, const ParticipationClaim& b) {
        return a.client_id < b.client_id;
    });
    if (stats) *stats = local;
    return out;
}

std::vector<ParticipationClaim> server_draw_candidates(const std::vector<ClientState>& population,
                                                       uint64_t announced_population,
                                                       const ProtocolConfig& config) {
    Threshold thr = selection_threshold(announced_population, config);
    auto msg = encode_round(config.round);
    std::vector<ParticipationClaim> out;
    for (const ClientState& c : population) {
        Bytes32 beta = prf_eval(c.draw.public_key, msg);
        if (eligible_beta(beta, thr)) out.push_back(ParticipationClaim{c.client_id, beta, {}});
    }
    std::sort(out.begin(), out.end(), [](const ParticipationClaim& a, const ParticipationClaim& b) {
        return a.client_id < b.client_id;
    });
    return out;
}

std::optional<ParticipantSet> server_finalize(const std::vector<ParticipationClaim>& candidates,
                                              const ProtocolConfig& config,
                                              const Registry& registry, DetRng& rng) {
    if (candidates.size() < config.target) return std::nullopt;
    std::vector<uint32_t> idx(candidates.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (uint64_t i = 0; i < config.target; ++i) {
        uint64_t j = i + rng.below(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }
    std::vector<ParticipantRecord> records;
    records.reserve(config.target);
    for (uint64_t i = 0; i < config.target; ++i) {
        const ParticipationClaim& c = candidates[idx[i]];
        records.push_back(
            ParticipantRecord{c.client_id, registry.at(c.client_id).account_key, c.beta, c.proof});
    }
    return ParticipantSet::assemble(config.round, std::move(records));
}

// ---------------------------------------------------------------------------
// Round driver

void MessageStats::merge(const MessageStats& other) {
    server_sent += other.server_sent;
    server_received += other.server_received;
    for (int i = 0; i < 4; ++i) {
        server_sent_by_stage[i] += other.server_sent_by_stage[i];
        server_received_by_stage[i] += other.server_received_by_stage[i];
    }
    max_participant_bytes = std::max(max_participant_bytes, other.max_participant_bytes);
    message_count += other.message_count;
}

const ClientState* RoundEnv::find(uint64_t client_id) const {
    auto it = std::lower_bound(clients.begin(), clients.end(), client_id,
                               [](const ClientState& c, uint64_t id) { return c.client_id < id; });
    if (it != clients.end() && it->client_id == client_id) return &*it;
    return nullptr;
}

bool RoundEnv::is_dishonest(uint64_t client_id) const {
    const ClientState* c = find(client_id);
    return c && c->dishonest;
}

namespace {

const char* json_bool(bool b) { return b ? "true" : "false"; }

struct TranscriptSink {
    std::vector<std::string>* lines;
    explicit operator bool() const { return lines != nullptr; }
    void push(std::string line) const {
        if (lines) lines->push_back(std::move(line));
    }
};

}  // namespace

RoundOutcome run_full_round(const std::vector<ClientState>& clients, const Registry& registry,
                            const ProtocolConfig& config, ServerBehavior& behavior,
                            const CryptoSuite& crypto, DetRng& rng,
                            std::vector<std::string>* transcript) {
    config.validate();
    for (size_t i = 1; i < clients.size(); ++i)
        if (clients[i - 1].client_id >= clients[i].client_id)
            throw std::invalid_argument("clients must be strictly ascending by id");

    RoundOutcome out;
    MessageStats& ms = out.stats;
    RoundEnv env{config, registry, crypto, clients, rng};
    TranscriptSink sink{transcript};
    const std::string round_str = std::to_string(config.round);
    const auto round_msg = encode_round(config.round);

    const uint64_t true_n = clients.size();
    const uint64_t announced = behavior.announce_population(true_n, env);
    out.announced_population = announced;
    RoundAnnouncement ann{config.round, announced};

    // Per-participant byte totals, to report the heaviest member.
    std::unordered_map<uint64_t, uint64_t> member_bytes;

    // Stage 1.
    std::vector<TimedClaim> arrivals;
    std::unordered_map<uint64_t, ParticipationClaim> own_claims;  // honest claimers
    std::vector<ParticipationClaim> candidates;

    if (config.variant == Variant::ClientDraw) {
        ms.server_sent += true_n * kAnnouncementBytes;
        ms.server_sent_by_stage[1] += true_n * kAnnouncementBytes;
        ms.message_count += true_n;
        if (sink)
            sink.push("{\"bytes\":" + std::to_string(true_n * kAnnouncementBytes) +
                      ",\"population\":" + std::to_string(announced) + ",\"recipients\":" +
                      std::to_string(true_n) + ",\"round\":" + round_str +
                      ",\"stage\":1,\"type\":\"announce\"}");
        for (const ClientState& c : clients) {
            SampleResult res = client_self_sample(c, ann, config, crypto, !c.dishonest);
            if (res.outcome == SampleOutcome::Abort) {
                out.honest_verdicts.emplace_back(
                    c.client_id, Verdict::fail(res.reason, "stage-1 refusal"));
                if (sink)
                    sink.push("{\"client\":" + std::to_string(c.client_id) +
                              ",\"ok\":false,\"reason\":\"" +
                              std::string(abort_reason_name(res.reason)) + "\",\"round\":" +
                              round_str + ",\"stage\":1,\"type\":\"verdict\"}");
                continue;
            }
            if (res.outcome != SampleOutcome::Claim) continue;
            uint64_t tick = behavior.claim_tick(c.client_id, env);
            arrivals.push_back(TimedClaim{res.claim, tick});
            if (!c.dishonest) own_claims.emplace(c.client_id, res.claim);
            ms.server_received += kClaimBytes;
            ms.server_received_by_stage[1] += kClaimBytes;
            ms.message_count += 1;
            if (sink)
                sink.push("{\"bytes\":120,\"client\":" + std::to_string(c.client_id) +
                          ",\"round\":" + round_str + ",\"stage\":1,\"tick\":" +
                          std::to_string(tick) + ",\"type\":\"claim\"}");
        }
        CollectStats cs;
        candidates = server_collect_candidates(arrivals, announced, config, registry, crypto, &cs);
        if (sink)
            sink.push("{\"candidates\":" + std::to_string(candidates.size()) +
                      ",\"dropped_duplicate\":" + std::to_string(cs.dropped_duplicate) +
                      ",\"dropped_invalid\":" + std::to_string(cs.dropped_invalid) +
                      ",\"dropped_late\":" + std::to_string(cs.dropped_late) + ",\"round\":" +
                      round_str + ",\"stage\":2,\"type\":\"collect\"}");
    } else {
        candidates = server_draw_candidates(clients, announced, config);
        if (sink)
            sink.push("{\"candidates\":" + std::to_string(candidates.size()) + ",\"round\":" +
                      round_str + ",\"stage\":1,\"type\":\"draw\"}");
    }

    behavior.filter_candidates(candidates, env);
    out.candidate_count = candidates.size();

    // Finalize.
    std::optional<ParticipantSet> finalized;
    if (candidates.size() >= config.target) {
        finalized = behavior.finalize(candidates, env);
        if (!finalized) finalized = server_finalize(candidates, config, registry, rng);
    }
    if (!finalized) {
        out.server_aborted = true;
        out.server_reason = AbortReason::NotEnoughCandidates;
        if (sink)
            sink.push("{\"reason\":\"NotEnoughCandidates\",\"round\":" + round_str +
                      ",\"type\":\"server_abort\"}");
        std::stable_sort(out.honest_verdicts.begin(), out.honest_verdicts.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        return out;
    }

    std::vector<ParticipantSet> variants{*finalized};
    {
        std::vector<ParticipationClaim> unselected;
        const auto& members = variants[0].members;
        for (const ParticipationClaim& c : candidates) {
            auto it = std::lower_bound(members.begin(), members.end(), c.client_id,
                                       [](const ParticipantRecord& r, uint64_t id) {
                                           return r.client_id < id;
                                       });
            if (it == members.end() || it->client_id != c.client_id) unselected.push_back(c);
        }
        behavior.make_variants(variants, unselected, env);
    }
    out.finalized_set = variants[0];
    for (const ParticipantRecord& rec : variants[0].members)
        if (env.is_dishonest(rec.client_id)) out.dishonest_in_final++;
    if (sink) {
        std::string ids;
        for (const ParticipantRecord& rec : variants[0].members) {
            if (!ids.empty()) ids += ",";
            ids += std::to_string(rec.client_id);
        }
        sink.push("{\"members\":[" + ids + "],\"round\":" + round_str +
                  ",\"type\":\"finalize\",\"variants\":" + std::to_string(variants.size()) + "}");
    }

    // Stage 2 fan-out. Deliveries carry (member id, variant index); the
    // common part of each variant's verification is computed once.
    struct Delivery {
        uint64_t id;
        size_t variant;
        bool honest;
        bool verified_ok = false;
        bool signed_share = false;
    };
    std::vector<Delivery> deliveries;
    std::unordered_set<uint64_t> delivered_ids;
    for (size_t v = 0; v < variants.size(); ++v) {
        const auto& members = variants[v].members;
        for (size_t r = 0; r < members.size(); ++r) {
            uint64_t id = members[r].client_id;
            if (behavior.variant_for(id, r, env) != v) continue;
            const ClientState* c = env.find(id);
            if (!c) continue;  // not part of this population, nothing to deliver to
            deliveries.push_back(Delivery{id, v, !c->dishonest});
            delivered_ids.insert(id);
        }
    }

    const size_t vcount = variants.size();
    std::vector<Bytes> encodings(vcount);
    std::vector<char> have_encoding(vcount, 0);
    auto encoding_of = [&](size_t v) -> const Bytes& {
        if (!have_encoding[v]) {
            encodings[v] = canonical_encode(variants[v], config.variant);
            have_encoding[v] = 1;
        }
        return encodings[v];
    };
    std::vector<Verdict> common(vcount);
    std::vector<char> have_common(vcount, 0);
    auto common_of = [&](size_t v) -> const Verdict& {
        if (!have_common[v]) {
            common[v] = verify_set_common(variants[v], announced, config, registry, crypto);
            have_common[v] = 1;
        }
        return common[v];
    };

    const uint64_t notice_size = selection_notice_bytes(config.target, config.variant);
    std::vector<std::vector<SignatureShare>> shares_by_variant(vcount);
    std::vector<std::pair<uint64_t, Verdict>> member_verdicts;

    for (Delivery& d : deliveries) {
        ms.server_sent += notice_size;
        ms.server_sent_by_stage[2] += notice_size;
        ms.message_count += 1;
        uint64_t& bytes = member_bytes[d.id];
        bytes += notice_size;
        if (config.variant == Variant::ClientDraw) {
            bytes += kAnnouncementBytes;
            if (own_claims.count(d.id) || env.is_dishonest(d.id)) bytes += kClaimBytes;
        }
        if (sink)
            sink.push("{\"bytes\":" + std::to_string(notice_size) + ",\"client\":" +
                      std::to_string(d.id) + ",\"round\":" + round_str +
                      ",\"stage\":2,\"type\":\"selection\",\"variant\":" +
                      std::to_string(d.variant) + "}");

        const ClientState& client = *env.find(d.id);
        bool will_sign = false;
        if (d.honest) {
            OwnRecord own;
            if (config.variant == Variant::ClientDraw) {
                auto it = own_claims.find(d.id);
                if (it != own_claims.end()) {
                    own = own_record_client_draw(client, it->second);
                } else {
                    // Declined or refused at stage 1; recompute what the own
                    // row would have said to judge a fabricated inclusion.
                    VrfOutput self_eval = crypto.vrf->eval(client.draw, round_msg);
                    own = OwnRecord{client.account.public_key, self_eval.beta, self_eval.proof,
                                    true};
                }
            } else {
                own = own_record_server_draw(client, config.round);
            }
            Verdict v = client_verify_outcome(d.id, own, variants[d.variant], announced, config,
                                              registry, crypto, &common_of(d.variant));
            d.verified_ok = v.ok;
            will_sign = v.ok;
            member_verdicts.emplace_back(d.id, std::move(v));
        } else {
            will_sign = true;  // coordinated members endorse whatever they received
        }

        if (will_sign) {
            Bytes64 sig = crypto.sig->sign(client.account, encoding_of(d.variant));
            shares_by_variant[d.variant].push_back(SignatureShare{d.id, sig});
            d.signed_share = true;
            ms.server_received += kSignatureShareBytes;
            ms.server_received_by_stage[3] += kSignatureShareBytes;
            ms.message_count += 1;
            member_bytes[d.id] += kSignatureShareBytes;
            if (sink)
                sink.push("{\"bytes\":72,\"client\":" + std::to_string(d.id) + ",\"round\":" +
                          round_str + ",\"stage\":3,\"type\":\"signature\"}");
        }
    }

    // Members the behavior withheld the selection from: honest ones time out.
    for (const ParticipantSet& vset : variants)
        for (const ParticipantRecord& rec : vset.members) {
            if (delivered_ids.count(rec.client_id)) continue;
            delivered_ids.insert(rec.client_id);
            const ClientState* c = env.find(rec.client_id);
            if (c && !c->dishonest)
                member_verdicts.emplace_back(
                    rec.client_id,
                    Verdict::fail(AbortReason::Timeout, "no selection message received"));
        }

    // Stage 3: one bundle with every share, sent to each notified member.
    SignatureBundle bundle{config.round, {}};
    for (const auto& vec : shares_by_variant)
        bundle.shares.insert(bundle.shares.end(), vec.begin(), vec.end());
    std::sort(bundle.shares.begin(), bundle.shares.end(),
              [](const SignatureShare& a, const SignatureShare& b) {
                  return a.client_id < b.client_id;
              });
    const uint64_t bsize = bundle_bytes(bundle.shares.size());

    std::vector<Verdict> bundle_check(vcount);
    std::vector<char> have_bundle_check(vcount, 0);
    auto bundle_check_of = [&](size_t v) -> const Verdict& {
        if (!have_bundle_check[v]) {
            bundle_check[v] =
                client_consistency_check(variants[v], bundle, config, registry, crypto);
            have_bundle_check[v] = 1;
        }
        return bundle_check[v];
    };

    auto verdict_for = [&](uint64_t id) -> Verdict* {
        for (auto& [vid, verdict] : member_verdicts)
            if (vid == id) return &verdict;
        return nullptr;
    };

    uint64_t honest_accepts = 0;
    bool honest_member_abort = false;
    const Bytes* agreed_encoding = nullptr;
    for (const Delivery& d : deliveries) {
        ms.server_sent += bsize;
        ms.server_sent_by_stage[3] += bsize;
        ms.message_count += 1;
        member_bytes[d.id] += bsize;
        if (sink)
            sink.push("{\"bytes\":" + std::to_string(bsize) + ",\"client\":" +
                      std::to_string(d.id) + ",\"round\":" + round_str +
                      ",\"shares\":" + std::to_string(bundle.shares.size()) +
                      ",\"stage\":3,\"type\":\"bundle\"}");
        if (!d.honest) continue;
        Verdict* v = verdict_for(d.id);
        if (!v || !v->ok) continue;
        const Verdict& check = bundle_check_of(d.variant);
        if (!check.ok) *v = check;
        if (v->ok) {
            honest_accepts++;
            const Bytes& enc = encoding_of(d.variant);
            if (!agreed_encoding) {
                agreed_encoding = &enc;
            } else if (*agreed_encoding != enc) {
                out.agreement = false;
            }
        }
    }

    for (const auto& [id, verdict] : member_verdicts) {
        if (!verdict.ok) honest_member_abort = true;
        if (sink) {
            std::string line = "{\"client\":" + std::to_string(id);
            if (!verdict.ok) line += ",\"detail\":\"" + verdict.detail + "\"";
            line += ",\"ok\":" + std::string(json_bool(verdict.ok));
            if (!verdict.ok)
                line += ",\"reason\":\"" + std::string(abort_reason_name(verdict.reason)) + "\"";
            line += ",\"round\":" + round_str + ",\"type\":\"verdict\"}";
            sink.push(std::move(line));
        }
        out.honest_verdicts.emplace_back(id, verdict);
    }
    std::stable_sort(out.honest_verdicts.begin(), out.honest_verdicts.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    for (const auto& [id, bytes] : member_bytes)
        ms.max_participant_bytes = std::max(ms.max_participant_bytes, bytes);

    out.finalized = !honest_member_abort;
    out.honest_finalized = out.finalized && honest_accepts > 0;
    if (sink)
        sink.push("{\"agreement\":" + std::string(json_bool(out.agreement)) + ",\"candidates\":" +
                  std::to_string(out.candidate_count) + ",\"dishonest\":" +
                  std::to_string(out.dishonest_in_final) + ",\"finalized\":" +
                  std::string(json_bool(out.finalized)) + ",\"honest_finalized\":" +
                  std::string(json_bool(out.honest_finalized)) + ",\"round\":" + round_str +
                  ",\"type\":\"outcome\"}");
    return out;
}

}  // namespace sortition::protocol
