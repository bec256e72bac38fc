#include <algorithm>
#include <optional>
#include <vector>

#include "doctest.h"
#include "sortition/bounds.hpp"
#include "sortition/bytes.hpp"
#include "sortition/primitives.hpp"
#include "sortition/protocol.hpp"
#include "sortition/rng.hpp"

using namespace sortition;
namespace proto = sortition::protocol;

namespace {

struct World {
    std::vector<proto::ClientState> clients;
    proto::Registry registry;
};

// Non-contiguous ids so nothing silently assumes id == index.
World make_world(uint64_t n, uint64_t seed, const CryptoSuite& crypto,
                 const std::vector<uint64_t>& dishonest_ids = {}) {
    World w;
    for (uint64_t i = 0; i < n; ++i) {
        proto::ClientState c;
        c.client_id = 10 + 3 * i;
        Bytes32 vseed{}, sseed{};
        DetRng ra(DetRng::derive(seed, 2 * i));
        ra.fill(vseed.data(), vseed.size());
        DetRng rb(DetRng::derive(seed, 2 * i + 1));
        rb.fill(sseed.data(), sseed.size());
        c.draw = crypto.vrf->keygen(vseed);
        c.account = crypto.sig->keygen(sseed);
        c.dishonest = std::find(dishonest_ids.begin(), dishonest_ids.end(), c.client_id) !=
                      dishonest_ids.end();
        w.registry.enroll({c.client_id, c.account.public_key, c.draw.public_key});
        w.clients.push_back(std::move(c));
    }
    return w;
}

proto::ProtocolConfig base_config(proto::Variant variant) {
    proto::ProtocolConfig cfg;
    cfg.target = 3;
    cfg.over_selection = Ratio{3, 2};
    cfg.population_floor = 8;
    cfg.timeout_ticks = 4;
    cfg.variant = variant;
    cfg.round = 7;
    return cfg;
}

// Independent eligibility oracle: big-integer comparison against the bounds
// module's threshold, bypassing Threshold export and memcmp.
bool oracle_eligible(const Bytes32& beta, uint64_t population, const proto::ProtocolConfig& cfg) {
    mpz_class t =
        bounds::eligibility_threshold(mpz_class((unsigned long)population), cfg.target,
                                      cfg.over_selection);
    return beta_to_int(beta) < t;
}

Bytes32 client_beta(const proto::ClientState& c, const proto::ProtocolConfig& cfg,
                    const CryptoSuite& crypto) {
    if (cfg.variant == proto::Variant::ClientDraw)
        return crypto.vrf->eval(c.draw, encode_round(cfg.round)).beta;
    return prf_eval(c.draw.public_key, encode_round(cfg.round));
}

uint64_t count_eligible(const World& w, const proto::ProtocolConfig& cfg,
                        const CryptoSuite& crypto, bool dishonest_only = false) {
    uint64_t k = 0;
    for (const auto& c : w.clients) {
        if (dishonest_only && !c.dishonest) continue;
        if (oracle_eligible(client_beta(c, cfg, crypto), w.clients.size(), cfg)) k++;
    }
    return k;
}

// First seed whose world has at least `need` eligible clients.
uint64_t find_seed(uint64_t n, const proto::ProtocolConfig& cfg, const CryptoSuite& crypto,
                   uint64_t need, const std::vector<uint64_t>& dishonest = {}) {
    for (uint64_t seed = 1; seed < 64; ++seed) {
        World w = make_world(n, seed, crypto, dishonest);
        if (count_eligible(w, cfg, crypto) >= need) return seed;
    }
    FAIL("no seed found");
    return 0;
}

}  // namespace

TEST_CASE("config validation") {
    proto::ProtocolConfig cfg = base_config(proto::Variant::ClientDraw);
    CHECK_NOTHROW(cfg.validate());
    auto bad = cfg;
    bad.target = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.population_floor = 2;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.over_selection = Ratio{1, 2};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.target = 6;
    bad.over_selection = Ratio{3, 2};
    bad.population_floor = 8;  // 9 > 8
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("registry enrollment") {
    proto::Registry reg;
    reg.enroll({30, Bytes32{1}, Bytes32{2}});
    reg.enroll({10, Bytes32{3}, Bytes32{4}});
    reg.enroll({20, Bytes32{5}, Bytes32{6}});
    CHECK(reg.size() == 3);
    CHECK(reg.find(10) != nullptr);
    CHECK(reg.find(10)->account_key == Bytes32{3});
    CHECK(reg.find(11) == nullptr);
    CHECK(reg.at(20).draw_key == Bytes32{6});
    CHECK_THROWS_AS(reg.at(11), std::out_of_range);
    CHECK_THROWS_AS(reg.enroll({20, Bytes32{}, Bytes32{}}), std::invalid_argument);
    REQUIRE(reg.issuance_log().size() == 3);
    CHECK(reg.issuance_log()[0].client_id == 30);
    CHECK(reg.issuance_log()[1].client_id == 10);
    CHECK(reg.issuance_log()[2].client_id == 20);
}

TEST_CASE("canonical encoding layout") {
    proto::ParticipantRecord a;
    a.client_id = 5;
    a.account_key.fill(0xaa);
    a.beta.fill(0xbb);
    a.proof.fill(0xcc);
    proto::ParticipantRecord b;
    b.client_id = 9;
    b.account_key.fill(0x11);
    b.beta.fill(0x22);
    b.proof.fill(0x33);
    proto::ParticipantSet set{3, {a, b}};

    Bytes expect;
    append(expect, be64(3));
    append(expect, be64(2));
    append(expect, be64(5));
    append(expect, a.account_key);
    append(expect, a.beta);
    append(expect, a.proof);
    append(expect, be64(9));
    append(expect, b.account_key);
    append(expect, b.beta);
    append(expect, b.proof);
    CHECK(proto::canonical_encode(set, proto::Variant::ClientDraw) == expect);
    CHECK(expect.size() == proto::encoded_set_bytes(2, proto::Variant::ClientDraw));

    Bytes expect_sc;
    append(expect_sc, be64(3));
    append(expect_sc, be64(2));
    append(expect_sc, be64(5));
    append(expect_sc, a.account_key);
    append(expect_sc, a.beta);
    append(expect_sc, be64(9));
    append(expect_sc, b.account_key);
    append(expect_sc, b.beta);
    CHECK(proto::canonical_encode(set, proto::Variant::ServerDraw) == expect_sc);

    proto::ParticipantSet empty{0, {}};
    CHECK(proto::canonical_encode(empty, proto::Variant::ClientDraw) == Bytes(16, 0));

    proto::ParticipantSet unsorted{3, {b, a}};
    CHECK_THROWS_AS(proto::canonical_encode(unsorted, proto::Variant::ClientDraw),
                    std::invalid_argument);
    proto::ParticipantSet dup{3, {a, a}};
    CHECK_THROWS_AS(proto::canonical_encode(dup, proto::Variant::ClientDraw),
                    std::invalid_argument);

    auto sorted = proto::ParticipantSet::assemble(3, {b, a});
    CHECK(sorted.members[0].client_id == 5);
    CHECK(sorted.members[1].client_id == 9);
    CHECK_THROWS_AS(proto::ParticipantSet::assemble(3, {a, a}), std::invalid_argument);

    CHECK(proto::selection_notice_bytes(2, proto::Variant::ClientDraw) == expect.size());
    CHECK(proto::selection_notice_bytes(2, proto::Variant::ServerDraw) == expect_sc.size() + 8);
    CHECK(proto::bundle_bytes(3) == 8 + 3 * 72);
}

TEST_CASE("selection threshold export") {
    proto::ProtocolConfig cfg = base_config(proto::Variant::ClientDraw);
    for (uint64_t n : {8u, 12u, 1000u, 54321u}) {
        proto::Threshold thr = proto::selection_threshold(n, cfg);
        mpz_class want = bounds::eligibility_threshold(mpz_class((unsigned long)n), cfg.target,
                                                       cfg.over_selection);
        REQUIRE_FALSE(thr.all);
        CHECK(beta_to_int(thr.limit) == want);

        // beta == threshold is not eligible, threshold - 1 is.
        CHECK_FALSE(proto::eligible_beta(thr.limit, thr));
        mpz_class below = want - 1;
        Bytes32 edge{};
        size_t bits = mpz_sizeinbase(below.get_mpz_t(), 2);
        size_t nbytes = (bits + 7) / 8;
        size_t written = 0;
        mpz_export(edge.data() + (32 - nbytes), &written, 1, 1, 1, 0, below.get_mpz_t());
        CHECK(proto::eligible_beta(edge, thr));
    }

    // alpha * target >= population: everything is eligible.
    proto::ProtocolConfig tiny = cfg;
    tiny.target = 8;
    tiny.over_selection = Ratio{1, 1};
    proto::Threshold all = proto::selection_threshold(8, tiny);
    CHECK(all.all);
    Bytes32 ff;
    ff.fill(0xff);
    CHECK(proto::eligible_beta(ff, all));

    proto::Threshold none = proto::selection_threshold(0, cfg);
    CHECK_FALSE(none.all);
    CHECK_FALSE(proto::eligible_beta(Bytes32{}, none));
}

TEST_CASE("client self-sampling") {
    const CryptoSuite& crypto = sim_crypto();
    proto::ProtocolConfig cfg = base_config(proto::Variant::ClientDraw);
    uint64_t seed = find_seed(12, cfg, crypto, 1);
    World w = make_world(12, seed, crypto);

    proto::RoundAnnouncement ann{cfg.round, 12};
    uint64_t claims = 0;
    for (const auto& c : w.clients) {
        auto res = proto::client_self_sample(c, ann, cfg, crypto);
        bool want = oracle_eligible(client_beta(c, cfg, crypto), 12, cfg);
        CHECK((res.outcome == proto::SampleOutcome::Claim) == want);
        if (res.outcome == proto::SampleOutcome::Claim) {
            claims++;
            CHECK(res.claim.client_id == c.client_id);
            CHECK(crypto.vrf->verify(c.draw.public_key, encode_round(cfg.round), res.claim.beta,
                                     res.claim.proof));
        }
    }
    CHECK(claims == count_eligible(w, cfg, crypto));

    // Announced population below the floor: honest clients refuse, a client
    // told to skip the check still claims when eligible.
    proto::RoundAnnouncement low{cfg.round, cfg.population_floor - 1};
    auto refused = proto::client_self_sample(w.clients[0], low, cfg, crypto);
    CHECK(refused.outcome == proto::SampleOutcome::Abort);
    CHECK(refused.reason == proto::AbortReason::PopulationTooSmall);
    bool any_claim = false;
    for (const auto& c : w.clients) {
        auto forced = proto::client_self_sample(c, low, cfg, crypto, false);
        CHECK(forced.outcome != proto::SampleOutcome::Abort);
        any_claim = any_claim || forced.outcome == proto::SampleOutcome::Claim;
    }
    CHECK(any_claim);
}

TEST_CASE("claim collection rules") {
    const CryptoSuite& crypto = sim_crypto();
    proto::ProtocolConfig cfg = base_config(proto::Variant::ClientDraw);
    uint64_t seed = find_seed(12, cfg, crypto, 2);
    World w = make_world(12, seed, crypto);
    proto::RoundAnnouncement ann{cfg.round, 12};

    std::vector<proto::ParticipationClaim> valid;
    for (const auto& c : w.clients) {
        auto res = proto::client_self_sample(c, ann, cfg, crypto);
        if (res.outcome == proto::SampleOutcome::Claim) valid.push_back(res.claim);
    }
    REQUIRE(valid.size() >= 2);

    std::vector<proto::TimedClaim> arrivals;
    arrivals.push_back({valid[0], cfg.timeout_ticks});      // boundary: on time
    arrivals.push_back({valid[1], cfg.timeout_ticks + 1});  // late
    proto::ParticipationClaim dup = valid[0];
    dup.beta[0] ^= 1;
    arrivals.push_back({dup, 0});  // duplicate id, second arrival loses
    proto::ParticipationClaim unknown = valid[1];
    unknown.client_id = 999;
    arrivals.push_back({unknown, 0});  // unregistered
    proto::ParticipationClaim bad_proof = valid[1];
    bad_proof.proof[3] ^= 0x40;
    arrivals.push_back({bad_proof, 0});  // proof does not verify
    proto::ParticipationClaim fat = valid[1];
    fat.beta.fill(0xff);
    arrivals.push_back({fat, 0});  // above threshold

    proto::CollectStats stats;
    auto got = proto::server_collect_candidates(arrivals, 12, cfg, w.registry, crypto, &stats);
    REQUIRE(got.size() == 1);
    CHECK(got[0].client_id == valid[0].client_id);
    CHECK(got[0].beta == valid[0].beta);
    CHECK(stats.dropped_late == 1);
    // First on-time arrival per id wins even when it turns out invalid, so
    // the inflated-beta retry of valid[1] counts as a duplicate of the
    // broken-proof claim that burned that id's slot.
    CHECK(stats.dropped_duplicate == 2);
    CHECK(stats.dropped_invalid == 2);  // unknown id, broken proof

    // Output is sorted by id even when arrivals are not.
    std::vector<proto::TimedClaim> reversed;
    for (auto it = valid.rbegin(); it != valid.rend(); ++it) reversed.push_back({*it, 0});
    auto sorted = proto::server_collect_candidates(reversed, 12, cfg, w.registry, crypto);
    CHECK(sorted.size() == valid.size());
    CHECK(std::is_sorted(sorted.begin(), sorted.end(),
                         [](const auto& a, const auto& b) { return a.client_id < b.client_id; }));
}

TEST_CASE("finalize draws a uniform subset deterministically") {
    const CryptoSuite& crypto = sim_crypto();
    proto::ProtocolConfig cfg = base_config(proto::Variant::ServerDraw);
    cfg.target = 4;
    cfg.over_selection = Ratio{2, 1};
    uint64_t seed = find_seed(16, cfg, crypto, 6);
    World w = make_world(16, seed, crypto);
    auto candidates = proto::server_draw_candidates(w.clients, 16, cfg);
    REQUIRE(candidates.size() >= 6);

    DetRng r1(42), r2(42);
    auto s1 = proto::server_finalize(candidates, cfg, w.registry, r1);
    auto s2 = proto::server_finalize(candidates, cfg, w.registry, r2);
    REQUIRE(s1.has_value());
    CHECK(s1->members.size() == cfg.target);
    CHECK(proto::canonical_encode(*s1, cfg.variant) == proto::canonical_encode(*s2, cfg.variant));
    bool differs = false;
    for (uint64_t alt = 43; alt < 53 && !differs; ++alt) {
        DetRng r3(alt);
        auto s3 = proto::server_finalize(candidates, cfg, w.registry, r3);
        REQUIRE(s3.has_value());
        differs = proto::canonical_encode(*s1, cfg.variant) !=
                  proto::canonical_encode(*s3, cfg.variant);
    }
    CHECK(differs);

    for (const auto& rec : s1->members) {
        CHECK(w.registry.at(rec.client_id).account_key == rec.account_key);
        bool from_candidates = false;
        for (const auto& c : candidates)
            if (c.client_id == rec.client_id && c.beta == rec.beta) from_candidates = true;
        CHECK(from_candidates);
    }

    std::vector<proto::ParticipationClaim> few(candidates.begin(), candidates.begin() + 3);
    DetRng r4(1);
    CHECK_FALSE(proto::server_finalize(few, cfg, w.registry, r4).has_value());
}

TEST_CASE("stage-2 verification check order") {
    const CryptoSuite& crypto = sim_crypto();
    proto::ProtocolConfig cfg = base_config(proto::Variant::ClientDraw);
    uint64_t seed = find_seed(12, cfg, crypto, 3);
    World w = make_world(12, seed, crypto);
    proto::RoundAnnouncement ann{cfg.round, 12};

    std::vector<proto::TimedClaim> arrivals;
    std::vector<proto::ParticipationClaim> own_claims;
    for (const auto& c : w.clients) {
        auto res = proto::client_self_sample(c, ann, cfg, crypto);
        if (res.outcome == proto::SampleOutcome::Claim) {
            arrivals.push_back({res.claim, 0});
            own_claims.push_back(res.claim);
        }
    }
    auto candidates = proto::server_collect_candidates(arrivals, 12, cfg, w.registry, crypto);
    REQUIRE(candidates.size() >= cfg.target);
    DetRng rng(7);
    auto maybe = proto::server_finalize(candidates, cfg, w.registry, rng);
    REQUIRE(maybe.has_value());
    proto::ParticipantSet set = *maybe;

    const uint64_t self = set.members[1].client_id;
    const proto::ClientState* self_state = nullptr;
    for (const auto& c : w.clients)
        if (c.client_id == self) self_state = &c;
    REQUIRE(self_state != nullptr);
    proto::ParticipationClaim self_claim{};
    for (const auto& c : own_claims)
        if (c.client_id == self) self_claim = c;
    proto::OwnRecord own = proto::own_record_client_draw(*self_state, self_claim);

    auto verify = [&](const proto::ParticipantSet& s, uint64_t n) {
        return proto::client_verify_outcome(self, own, s, n, cfg, w.registry, crypto);
    };

    CHECK(verify(set, 12).ok);
    CHECK(proto::verify_set_common(set, 12, cfg, w.registry, crypto).ok);

    // (a) fires before (b): removing the own record also breaks the size.
    proto::ParticipantSet no_self = set;
    no_self.members.erase(no_self.members.begin() + 1);
    auto v = verify(no_self, 12);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::SelfMissing);

    // own bytes rewritten: still SelfMissing, not a randomness failure
    proto::ParticipantSet twisted = set;
    twisted.members[1].beta[5] ^= 1;
    v = verify(twisted, 12);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::SelfMissing);

    // (b): someone else removed
    proto::ParticipantSet short_set = set;
    short_set.members.erase(short_set.members.begin());
    v = verify(short_set, 12);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::WrongSetSize);

    // (c): population below the floor reported at stage 2
    v = verify(set, cfg.population_floor - 1);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::PopulationTooSmall);

    // (d): unregistered member
    proto::ParticipantSet stranger = set;
    stranger.members[0].client_id = 9999;
    std::sort(stranger.members.begin(), stranger.members.end(),
              [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
    v = verify(stranger, 12);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::BadRandomness);
    CHECK(v.detail.find("unregistered") != std::string::npos);

    // (d): account key mismatch
    proto::ParticipantSet wrong_key = set;
    wrong_key.members[0].account_key[0] ^= 1;
    v = verify(wrong_key, 12);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::BadRandomness);
    CHECK(v.detail.find("account key") != std::string::npos);

    // (d): inflated randomness fails the threshold check before any proof
    // check, even though the proof bytes are untouched.
    proto::ParticipantSet inflated = set;
    inflated.members[0].beta.fill(0xff);
    v = verify(inflated, 12);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::BadRandomness);
    CHECK(v.detail.find("threshold") != std::string::npos);

    // (d): eligible randomness with a fabricated proof
    proto::ParticipantSet forged = set;
    forged.members[0].proof[10] ^= 0x20;
    v = verify(forged, 12);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::BadProof);

    // stale round
    proto::ParticipantSet stale = set;
    stale.round = cfg.round + 1;
    v = verify(stale, 12);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::BadRandomness);
    CHECK(v.detail.find("round") != std::string::npos);

    // unsorted members reported as a malformed set
    proto::ParticipantSet swapped = set;
    std::swap(swapped.members[0], swapped.members[2]);
    v = proto::verify_set_common(swapped, 12, cfg, w.registry, crypto);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::WrongSetSize);

    // memoized common verdict is reused verbatim
    proto::Verdict common = proto::verify_set_common(forged, 12, cfg, w.registry, crypto);
    v = proto::client_verify_outcome(self, own, forged, 12, cfg, w.registry, crypto, &common);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::BadProof);
}

TEST_CASE("stage-2 verification, server-computed randomness") {
    const CryptoSuite& crypto = sim_crypto();
    proto::ProtocolConfig cfg = base_config(proto::Variant::ServerDraw);
    uint64_t seed = find_seed(12, cfg, crypto, 3);
    World w = make_world(12, seed, crypto);

    auto candidates = proto::server_draw_candidates(w.clients, 12, cfg);
    REQUIRE(candidates.size() >= cfg.target);
    DetRng rng(7);
    auto maybe = proto::server_finalize(candidates, cfg, w.registry, rng);
    REQUIRE(maybe.has_value());
    proto::ParticipantSet set = *maybe;

    const uint64_t self = set.members[0].client_id;
    const proto::ClientState* self_state = nullptr;
    for (const auto& c : w.clients)
        if (c.client_id == self) self_state = &c;
    proto::OwnRecord own = proto::own_record_server_draw(*self_state, cfg.round);
    CHECK(own.beta == set.members[0].beta);

    auto verify = [&](const proto::ParticipantSet& s) {
        return proto::client_verify_outcome(self, own, s, 12, cfg, w.registry, crypto);
    };
    CHECK(verify(set).ok);

    // fabricated randomness: recomputation fires before the threshold check
    proto::ParticipantSet fake = set;
    fake.members[1].beta.fill(0x00);
    auto v = verify(fake);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::BadPrfValue);

    // correct recomputation but over-threshold value: pick a population
    // member whose derived randomness is ineligible and splice it in.
    const proto::ClientState* heavy = nullptr;
    for (const auto& c : w.clients) {
        if (c.client_id == self) continue;
        bool member = false;
        for (const auto& rec : set.members) member = member || rec.client_id == c.client_id;
        if (member) continue;
        if (!oracle_eligible(client_beta(c, cfg, crypto), 12, cfg)) heavy = &c;
    }
    REQUIRE(heavy != nullptr);
    proto::ParticipantSet spliced = set;
    spliced.members[1] = proto::ParticipantRecord{heavy->client_id, heavy->account.public_key,
                                                  client_beta(*heavy, cfg, crypto), {}};
    spliced = proto::ParticipantSet::assemble(cfg.round, spliced.members);
    v = verify(spliced);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::BadRandomness);
    CHECK(v.detail.find("threshold") != std::string::npos);
}

TEST_CASE("stage-3 signature bundle checks") {
    const CryptoSuite& crypto = sim_crypto();
    proto::ProtocolConfig cfg = base_config(proto::Variant::ClientDraw);
    uint64_t seed = find_seed(12, cfg, crypto, 3);
    World w = make_world(12, seed, crypto);
    proto::RoundAnnouncement ann{cfg.round, 12};

    std::vector<proto::TimedClaim> arrivals;
    for (const auto& c : w.clients) {
        auto res = proto::client_self_sample(c, ann, cfg, crypto);
        if (res.outcome == proto::SampleOutcome::Claim) arrivals.push_back({res.claim, 0});
    }
    auto candidates = proto::server_collect_candidates(arrivals, 12, cfg, w.registry, crypto);
    REQUIRE(candidates.size() >= cfg.target);
    DetRng rng(11);
    proto::ParticipantSet set = *proto::server_finalize(candidates, cfg, w.registry, rng);

    proto::SignatureBundle bundle{cfg.round, {}};
    for (const auto& rec : set.members) {
        const proto::ClientState* c = nullptr;
        for (const auto& s : w.clients)
            if (s.client_id == rec.client_id) c = &s;
        bundle.shares.push_back({rec.client_id, proto::client_sign_outcome(*c, set, cfg, crypto)});
    }

    CHECK(proto::client_consistency_check(set, bundle, cfg, w.registry, crypto).ok);

    proto::SignatureBundle missing = bundle;
    missing.shares.pop_back();
    auto v = proto::client_consistency_check(set, missing, cfg, w.registry, crypto);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::InconsistentSets);

    uint64_t outsider = 0;
    for (const auto& c : w.clients) {
        bool member = false;
        for (const auto& rec : set.members) member = member || rec.client_id == c.client_id;
        if (!member) {
            outsider = c.client_id;
            break;
        }
    }
    REQUIRE(outsider != 0);
    proto::SignatureBundle extra = bundle;
    extra.shares.push_back({outsider, bundle.shares[0].signature});
    v = proto::client_consistency_check(set, extra, cfg, w.registry, crypto);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::InconsistentSets);

    proto::SignatureBundle dup = bundle;
    dup.shares.push_back(dup.shares[0]);
    v = proto::client_consistency_check(set, dup, cfg, w.registry, crypto);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::InconsistentSets);

    proto::SignatureBundle tampered = bundle;
    tampered.shares[1].signature[7] ^= 2;
    v = proto::client_consistency_check(set, tampered, cfg, w.registry, crypto);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::SignatureInvalid);

    proto::SignatureBundle crossed = bundle;
    std::swap(crossed.shares[0].signature, crossed.shares[1].signature);
    v = proto::client_consistency_check(set, crossed, cfg, w.registry, crypto);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::SignatureInvalid);

    proto::SignatureBundle wrong_round = bundle;
    wrong_round.round = cfg.round + 1;
    v = proto::client_consistency_check(set, wrong_round, cfg, w.registry, crypto);
    CHECK_FALSE(v.ok);
    CHECK(v.reason == proto::AbortReason::InconsistentSets);
}

namespace {

uint64_t expected_honest_round_server_bytes(uint64_t n, uint64_t claims, uint64_t s,
                                            proto::Variant variant) {
    uint64_t sent = 0;
    if (variant == proto::Variant::ClientDraw) sent += n * proto::kAnnouncementBytes;
    sent += s * proto::selection_notice_bytes(s, variant);
    sent += s * proto::bundle_bytes(s);
    uint64_t received = s * proto::kSignatureShareBytes;
    if (variant == proto::Variant::ClientDraw) received += claims * proto::kClaimBytes;
    return sent + received;
}

}  // namespace

TEST_CASE("honest full round, both draw variants and both backends") {
    for (const char* backend : {"fast", "real"}) {
        const CryptoSuite& crypto = crypto_by_name(backend);
        for (proto::Variant variant : {proto::Variant::ClientDraw, proto::Variant::ServerDraw}) {
            CAPTURE(backend);
            CAPTURE(proto::variant_name(variant));
            proto::ProtocolConfig cfg = base_config(variant);
            uint64_t n = 12;
            std::vector<uint64_t> dishonest = {13, 22};
            uint64_t seed = 0;
            for (uint64_t try_seed = 1; try_seed < 64 && !seed; ++try_seed) {
                World probe = make_world(n, try_seed, crypto, dishonest);
                if (count_eligible(probe, cfg, crypto) >= cfg.target) seed = try_seed;
            }
            REQUIRE(seed != 0);
            World w = make_world(n, seed, crypto, dishonest);
            uint64_t eligible = count_eligible(w, cfg, crypto);

            proto::ServerBehavior honest;
            DetRng rng(99);
            auto out = proto::run_full_round(w.clients, w.registry, cfg, honest, crypto, rng);

            CHECK_FALSE(out.server_aborted);
            CHECK(out.finalized);
            CHECK(out.honest_finalized ==
                  (out.dishonest_in_final < cfg.target));  // some honest member accepted
            CHECK(out.agreement);
            CHECK(out.candidate_count == eligible);
            REQUIRE(out.finalized_set.has_value());
            CHECK(out.finalized_set->members.size() == cfg.target);
            CHECK(proto::verify_set_common(*out.finalized_set, n, cfg, w.registry, crypto).ok);

            uint64_t x = 0, honest_members = 0;
            for (const auto& rec : out.finalized_set->members) {
                bool bad = std::find(dishonest.begin(), dishonest.end(), rec.client_id) !=
                           dishonest.end();
                if (bad) x++;
                else honest_members++;
            }
            CHECK(out.dishonest_in_final == x);
            CHECK(out.honest_verdicts.size() == honest_members);
            for (const auto& [id, verdict] : out.honest_verdicts) {
                CAPTURE(id);
                CHECK(verdict.ok);
            }

            const proto::MessageStats& ms = out.stats;
            uint64_t claims = variant == proto::Variant::ClientDraw ? eligible : 0;
            CHECK(ms.server_sent + ms.server_received ==
                  expected_honest_round_server_bytes(n, claims, cfg.target, variant));
            if (variant == proto::Variant::ServerDraw) {
                CHECK(ms.server_sent_by_stage[1] == 0);
                CHECK(ms.server_received_by_stage[1] == 0);
            } else {
                CHECK(ms.server_sent_by_stage[1] == n * proto::kAnnouncementBytes);
                CHECK(ms.server_received_by_stage[1] == claims * proto::kClaimBytes);
            }
            uint64_t notice = proto::selection_notice_bytes(cfg.target, variant);
            uint64_t bundle = proto::bundle_bytes(cfg.target);
            uint64_t expect_member = notice + proto::kSignatureShareBytes + bundle;
            if (variant == proto::Variant::ClientDraw)
                expect_member += proto::kAnnouncementBytes + proto::kClaimBytes;
            CHECK(ms.max_participant_bytes == expect_member);
        }
    }
}

TEST_CASE("round runs are deterministic given the seed") {
    const CryptoSuite& crypto = sim_crypto();
    proto::ProtocolConfig cfg = base_config(proto::Variant::ClientDraw);
    uint64_t seed = find_seed(12, cfg, crypto, cfg.target, {16, 28});
    World w = make_world(12, seed, crypto, {16, 28});

    auto run = [&]() {
        proto::ServerBehavior honest;
        DetRng rng(12345);
        std::vector<std::string> lines;
        auto out = proto::run_full_round(w.clients, w.registry, cfg, honest, crypto, rng, &lines);
        return std::make_pair(out, lines);
    };
    auto [o1, t1] = run();
    auto [o2, t2] = run();
    CHECK(t1 == t2);
    CHECK(t1.size() > 4);
    REQUIRE(o1.finalized_set.has_value());
    CHECK(proto::canonical_encode(*o1.finalized_set, cfg.variant) ==
          proto::canonical_encode(*o2.finalized_set, cfg.variant));
    CHECK(o1.stats.server_sent == o2.stats.server_sent);
    for (const auto& line : t1) {
        CHECK(line.front() == '{');
        CHECK(line.back() == '}');
    }
}

namespace {

struct FilterEverything : proto::ServerBehavior {
    std::string_view name() const override { return "filter-everything"; }
    void filter_candidates(std::vector<proto::ParticipationClaim>& c, proto::RoundEnv&) override {
        c.clear();
    }
};

struct WithholdFrom : proto::ServerBehavior {
    uint64_t victim;
    explicit WithholdFrom(uint64_t v) : victim(v) {}
    std::string_view name() const override { return "withhold"; }
    size_t variant_for(uint64_t id, size_t, proto::RoundEnv&) override {
        return id == victim ? kWithhold : 0;
    }
};

struct AnnounceValue : proto::ServerBehavior {
    uint64_t value;
    explicit AnnounceValue(uint64_t v) : value(v) {}
    std::string_view name() const override { return "announce-value"; }
    uint64_t announce_population(uint64_t, proto::RoundEnv&) override { return value; }
};

struct DelayEverything : proto::ServerBehavior {
    std::string_view name() const override { return "delay-everything"; }
    uint64_t claim_tick(uint64_t, proto::RoundEnv& env) override {
        return env.config.timeout_ticks + 1;
    }
};

}  // namespace

TEST_CASE("server aborts when candidates run out") {
    const CryptoSuite& crypto = sim_crypto();
    proto::ProtocolConfig cfg = base_config(proto::Variant::ClientDraw);
    uint64_t seed = find_seed(12, cfg, crypto, cfg.target);
    World w = make_world(12, seed, crypto);

    FilterEverything behavior;
    DetRng rng(5);
    auto out = proto::run_full_round(w.clients, w.registry, cfg, behavior, crypto, rng);
    CHECK(out.server_aborted);
    CHECK(out.server_reason == proto::AbortReason::NotEnoughCandidates);
    CHECK_FALSE(out.finalized);
    CHECK_FALSE(out.honest_finalized);
    CHECK(out.candidate_count == 0);
    CHECK_FALSE(out.finalized_set.has_value());

    DelayEverything delayer;
    DetRng rng2(5);
    auto delayed = proto::run_full_round(w.clients, w.registry, cfg, delayer, crypto, rng2);
    CHECK(delayed.server_aborted);
    CHECK(delayed.candidate_count == 0);
}

TEST_CASE("withheld selection message times out") {
    const CryptoSuite& crypto = sim_crypto();
    proto::ProtocolConfig cfg = base_config(proto::Variant::ClientDraw);
    uint64_t seed = find_seed(12, cfg, crypto, cfg.target);
    World w = make_world(12, seed, crypto);

    proto::ServerBehavior honest;
    DetRng rng(99);
    auto base = proto::run_full_round(w.clients, w.registry, cfg, honest, crypto, rng);
    REQUIRE(base.finalized_set.has_value());
    uint64_t victim = base.finalized_set->members[0].client_id;

    WithholdFrom behavior(victim);
    DetRng rng2(99);
    auto out = proto::run_full_round(w.clients, w.registry, cfg, behavior, crypto, rng2);
    REQUIRE(out.finalized_set.has_value());
    CHECK_FALSE(out.finalized);
    bool saw_timeout = false;
    for (const auto& [id, verdict] : out.honest_verdicts)
        if (id == victim) {
            saw_timeout = true;
            CHECK_FALSE(verdict.ok);
            CHECK(verdict.reason == proto::AbortReason::Timeout);
        }
    CHECK(saw_timeout);
}

TEST_CASE("undersized population announcement") {
    const CryptoSuite& crypto = sim_crypto();
    proto::ProtocolConfig cfg = base_config(proto::Variant::ClientDraw);
    // mostly coordinated population so the round can still fill
    std::vector<uint64_t> dishonest;
    for (uint64_t i = 0; i < 9; ++i) dishonest.push_back(10 + 3 * i);

    uint64_t seed = 0;
    for (uint64_t try_seed = 1; try_seed < 64 && !seed; ++try_seed) {
        World probe = make_world(12, try_seed, crypto, dishonest);
        proto::ProtocolConfig low = cfg;  // eligibility judged at announced population
        uint64_t eligible_bad = 0;
        for (const auto& c : probe.clients)
            if (c.dishonest &&
                oracle_eligible(client_beta(c, low, crypto), cfg.population_floor - 1, low))
                eligible_bad++;
        if (eligible_bad >= cfg.target) seed = try_seed;
    }
    REQUIRE(seed != 0);
    World w = make_world(12, seed, crypto, dishonest);

    AnnounceValue behavior(cfg.population_floor - 1);
    DetRng rng(3);
    auto out = proto::run_full_round(w.clients, w.registry, cfg, behavior, crypto, rng);

    // every honest client refused at stage 1
    uint64_t refusals = 0;
    for (const auto& [id, verdict] : out.honest_verdicts) {
        if (verdict.ok) continue;
        CHECK(verdict.reason == proto::AbortReason::PopulationTooSmall);
        refusals++;
    }
    CHECK(refusals == 3);
    CHECK_FALSE(out.honest_finalized);
    if (!out.server_aborted) {
        REQUIRE(out.finalized_set.has_value());
        for (const auto& rec : out.finalized_set->members)
            CHECK(std::find(dishonest.begin(), dishonest.end(), rec.client_id) != dishonest.end());
    }
}
