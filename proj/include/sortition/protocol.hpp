#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <gmpxx.h>

#include "sortition/bytes.hpp"
#include "sortition/primitives.hpp"
#include "sortition/ratio.hpp"
#include "sortition/rng.hpp"

namespace sortition::protocol {

// Which party produces the per-client selection randomness.
// ClientDraw: each client evaluates its own VRF and proves eligibility.
// ServerDraw: the server derives every client's value from a public PRF key,
// so selection is recomputable (and predictable) by anyone.
enum class Variant : uint8_t { ClientDraw = 0, ServerDraw = 1 };

std::string_view variant_name(Variant v);
Variant variant_by_name(std::string_view name);

struct ProtocolConfig {
    uint64_t target = 0;            // participants per round (s)
    Ratio over_selection{1, 1};     // candidate inflation factor
    uint64_t population_floor = 0;  // smallest population honest clients accept
    uint64_t timeout_ticks = 0;     // claim arrival deadline, logical ticks
    Variant variant = Variant::ClientDraw;
    uint64_t round = 0;

    // target >= 1, floor >= target, over_selection >= 1,
    // over_selection * target <= floor.
    void validate() const;
};

enum class AbortReason : uint8_t {
    PopulationTooSmall,
    NotEnoughCandidates,
    SelfMissing,
    WrongSetSize,
    BadRandomness,
    BadProof,
    BadPrfValue,
    SignatureInvalid,
    InconsistentSets,
    Timeout,
};

std::string_view abort_reason_name(AbortReason reason);

struct Verdict {
    bool ok = true;
    AbortReason reason = AbortReason::Timeout;
    std::string detail;  // disambiguates checks that share a reason

    static Verdict pass() { return {}; }
    static Verdict fail(AbortReason r, std::string d = {}) { return {false, r, std::move(d)}; }
};

// ---------------------------------------------------------------------------
// Registration. One account key (signature) and one draw key (VRF public key
// or PRF key material) per client id, issued once, append-only.

struct ClientRegistration {
    uint64_t client_id = 0;
    Bytes32 account_key{};  // signature public key
    Bytes32 draw_key{};     // selection public key
};

class Registry {
  public:
    void enroll(const ClientRegistration& reg);  // throws on duplicate id
    const ClientRegistration* find(uint64_t client_id) const;
    const ClientRegistration& at(uint64_t client_id) const;  // throws when absent
    size_t size() const { return by_id_.size(); }
    const std::vector<ClientRegistration>& issuance_log() const { return log_; }

  private:
    std::vector<ClientRegistration> log_;
    std::vector<ClientRegistration> by_id_;  // sorted by id for binary search
};

// ---------------------------------------------------------------------------
// Wire messages. Sizes are fixed so byte accounting is exact.

constexpr uint64_t kAnnouncementBytes = 16;                 // round || population
constexpr uint64_t kClaimBytes = 8 + 32 + 80;               // id || beta || proof
constexpr uint64_t kSignatureShareBytes = 8 + 64;           // id || signature
constexpr uint64_t kRecordBytesClientDraw = 8 + 32 + 32 + 80;
constexpr uint64_t kRecordBytesServerDraw = 8 + 32 + 32;

struct RoundAnnouncement {
    uint64_t round = 0;
    uint64_t population = 0;  // may be adversarial; honest clients check it
};

struct ParticipationClaim {
    uint64_t client_id = 0;
    Bytes32 beta{};
    Bytes80 proof{};  // zero under ServerDraw (never on that wire)
};

struct ParticipantRecord {
    uint64_t client_id = 0;
    Bytes32 account_key{};
    Bytes32 beta{};
    Bytes80 proof{};  // meaningful under ClientDraw only
};

struct ParticipantSet {
    uint64_t round = 0;
    std::vector<ParticipantRecord> members;  // strictly ascending client_id

    // Sorts records and enforces distinct ids.
    static ParticipantSet assemble(uint64_t round, std::vector<ParticipantRecord> records);
};

struct SignatureShare {
    uint64_t client_id = 0;
    Bytes64 signature{};
};

struct SignatureBundle {
    uint64_t round = 0;
    std::vector<SignatureShare> shares;
};

// Injective byte encoding of (round, P): 8B BE round || 8B BE count ||
// per member 8B BE id || 32B account key || 32B beta || 80B proof
// (ClientDraw only). Throws if members are unsorted or duplicated.
Bytes canonical_encode(const ParticipantSet& set, Variant variant);
uint64_t encoded_set_bytes(uint64_t member_count, Variant variant);
uint64_t selection_notice_bytes(uint64_t member_count, Variant variant);
uint64_t bundle_bytes(uint64_t share_count);

// ---------------------------------------------------------------------------
// Eligibility. threshold = floor(alpha * s * m / n): a beta is eligible iff
// beta < threshold as a 256-bit big-endian integer.

struct Threshold {
    bool all = false;   // threshold reached m: every beta eligible
    Bytes32 limit{};    // valid when !all
};

Threshold selection_threshold(uint64_t population, const ProtocolConfig& config);

inline bool eligible_beta(const Bytes32& beta, const Threshold& t) {
    return t.all || std::memcmp(beta.data(), t.limit.data(), 32) < 0;
}

// ---------------------------------------------------------------------------
// Client-side steps. Clients are passive key holders; each protocol step is
// a pure function of their keys plus received messages.

struct ClientState {
    uint64_t client_id = 0;
    SigKeyPair account;  // registration key
    VrfKeyPair draw;     // selection key
    bool dishonest = false;
};

enum class SampleOutcome : uint8_t { Claim, Decline, Abort };

struct SampleResult {
    SampleOutcome outcome = SampleOutcome::Decline;
    ParticipationClaim claim{};               // when outcome == Claim
    AbortReason reason = AbortReason::PopulationTooSmall;  // when outcome == Abort
};

// Stage 1, ClientDraw: refuse when the announced population is below the
// floor; otherwise claim iff the own VRF output clears the threshold.
// enforce_floor=false models coordinated clients that skip the floor check.
SampleResult client_self_sample(const ClientState& client, const RoundAnnouncement& ann,
                                const ProtocolConfig& config, const CryptoSuite& crypto,
                                bool enforce_floor = true);

// What the client expects its own row in a participant set to look like.
struct OwnRecord {
    Bytes32 account_key{};
    Bytes32 beta{};
    Bytes80 proof{};
    bool has_proof = false;  // true under ClientDraw
};

OwnRecord own_record_client_draw(const ClientState& client, const ParticipationClaim& claim);
OwnRecord own_record_server_draw(const ClientState& client, uint64_t round);

// Recipient-independent part of the stage-2 checks: size, population floor,
// member ordering, and every member's randomness/proof. Callers fanning one
// set out to many recipients may evaluate this once and reuse it.
Verdict verify_set_common(const ParticipantSet& set, uint64_t announced_population,
                          const ProtocolConfig& config, const Registry& registry,
                          const CryptoSuite& crypto);

// Stage 2, full check in fixed order: (a) own byte-exact row present,
// (b) set size, (c) announced population >= floor, (d) per-member checks in
// ascending id order. `common` short-circuits (b)-(d) when already computed
// for this set; passing nullptr computes everything here.
Verdict client_verify_outcome(uint64_t self_id, const OwnRecord& own, const ParticipantSet& set,
                              uint64_t announced_population, const ProtocolConfig& config,
                              const Registry& registry, const CryptoSuite& crypto,
                              const Verdict* common = nullptr);

// Stage 3.
Bytes64 client_sign_outcome(const ClientState& client, const ParticipantSet& set,
                            const ProtocolConfig& config, const CryptoSuite& crypto);

// Bundle ids must equal the member ids of the locally accepted set exactly,
// and every share must verify over that set's encoding under the signer's
// registered account key.
Verdict client_consistency_check(const ParticipantSet& accepted, const SignatureBundle& bundle,
                                 const ProtocolConfig& config, const Registry& registry,
                                 const CryptoSuite& crypto);

// ---------------------------------------------------------------------------
// Server-side steps (honest behavior; adversarial deviations are layered on
// top through ServerBehavior).

struct TimedClaim {
    ParticipationClaim claim{};
    uint64_t tick = 0;
};

struct CollectStats {
    uint64_t dropped_late = 0;
    uint64_t dropped_duplicate = 0;
    uint64_t dropped_invalid = 0;
};

// Claims arriving within timeout_ticks, first per id wins, proof and
// threshold checked under the announced population. Output sorted by id.
std::vector<ParticipationClaim> server_collect_candidates(const std::vector<TimedClaim>& claims,
                                                          uint64_t announced_population,
                                                          const ProtocolConfig& config,
                                                          const Registry& registry,
                                                          const CryptoSuite& crypto,
                                                          CollectStats* stats = nullptr);

// ServerDraw stage 1: PRF every population member's draw key and keep those
// under the threshold for the announced population. Output sorted by id.
std::vector<ParticipationClaim> server_draw_candidates(const std::vector<ClientState>& population,
                                                       uint64_t announced_population,
                                                       const ProtocolConfig& config);

// Uniform s-subset via seeded partial shuffle; empty when |C| < s.
std::optional<ParticipantSet> server_finalize(const std::vector<ParticipationClaim>& candidates,
                                              const ProtocolConfig& config,
                                              const Registry& registry, DetRng& rng);

// ---------------------------------------------------------------------------
// Full-round driver with a pluggable server.

struct MessageStats {
    uint64_t server_sent = 0;
    uint64_t server_received = 0;
    uint64_t server_sent_by_stage[4] = {0, 0, 0, 0};
    uint64_t server_received_by_stage[4] = {0, 0, 0, 0};
    uint64_t max_participant_bytes = 0;  // heaviest single participant, both directions
    uint64_t message_count = 0;

    void merge(const MessageStats& other);
};

struct RoundEnv {
    const ProtocolConfig& config;
    const Registry& registry;
    const CryptoSuite& crypto;
    const std::vector<ClientState>& clients;  // ascending client_id
    DetRng& rng;

    const ClientState* find(uint64_t client_id) const;
    bool is_dishonest(uint64_t client_id) const;
};

// Hooks cover every deviation the simulator ships: lying about the
// population, delaying or dropping claims, biasing or fabricating the
// finalized set, and sending different sets to different recipients.
// Defaults are the honest server. Implementations may keep per-round state;
// one instance serves one round at a time.
class ServerBehavior {
  public:
    virtual ~ServerBehavior() = default;
    virtual std::string_view name() const { return "honest"; }

    virtual uint64_t announce_population(uint64_t true_population, RoundEnv& env) {
        (void)env;
        return true_population;
    }
    virtual uint64_t claim_tick(uint64_t client_id, RoundEnv& env) {
        (void)client_id, (void)env;
        return 0;
    }
    virtual void filter_candidates(std::vector<ParticipationClaim>& candidates, RoundEnv& env) {
        (void)candidates, (void)env;
    }
    // Return a set to override the honest uniform draw; nullopt delegates.
    // Called only when |candidates| >= target.
    virtual std::optional<ParticipantSet> finalize(
        const std::vector<ParticipationClaim>& candidates, RoundEnv& env) {
        (void)candidates, (void)env;
        return std::nullopt;
    }
    // May append or rewrite broadcast variants. variants[0] is the server's
    // canonical choice; `unselected` are leftover eligible candidates.
    virtual void make_variants(std::vector<ParticipantSet>& variants,
                               const std::vector<ParticipationClaim>& unselected, RoundEnv& env) {
        (void)variants, (void)unselected, (void)env;
    }
    // Which variant a member receives; kWithhold sends nothing (the member
    // times out). member_rank is the member's index within its variant.
    static constexpr size_t kWithhold = SIZE_MAX;
    virtual size_t variant_for(uint64_t member_id, size_t member_rank, RoundEnv& env) {
        (void)member_id, (void)member_rank, (void)env;
        return 0;
    }
};

struct RoundOutcome {
    bool server_aborted = false;
    AbortReason server_reason = AbortReason::NotEnoughCandidates;
    uint64_t announced_population = 0;  // what the server told the clients
    std::optional<ParticipantSet> finalized_set;  // variants[0] when not aborted

    bool finalized = false;         // completed with zero honest-member aborts
    bool honest_finalized = false;  // finalized with at least one honest member
    bool agreement = true;          // all accepting honest members saw identical bytes
    uint64_t dishonest_in_final = 0;  // x, counted on finalized_set
    uint64_t candidate_count = 0;

    std::vector<std::pair<uint64_t, Verdict>> honest_verdicts;  // ascending id
    MessageStats stats;
};

// Drives stages 1-3 for every party. `clients` must be ascending by id and
// registered. Honest clients follow the client-side steps verbatim;
// dishonest clients claim whenever eligible and sign whatever they receive.
// Transcript lines (JSON, one per message/event) are appended when a sink is
// given.
RoundOutcome run_full_round(const std::vector<ClientState>& clients, const Registry& registry,
                            const ProtocolConfig& config, ServerBehavior& behavior,
                            const CryptoSuite& crypto, DetRng& rng,
                            std::vector<std::string>* transcript = nullptr);

}  // namespace sortition::protocol
