#pragma once

#include <optional>
#include <string_view>

#include <gmpxx.h>

#include "sortition/bytes.hpp"

namespace sortition {

// =====================================================================
// Wire sizes. Fixed across backends so message accounting is identical.
// =====================================================================
constexpr size_t kRandomnessBytes = 32;  // per-client selection randomness (beta)
constexpr size_t kProofBytes = 80;
constexpr size_t kPublicKeyBytes = 32;
constexpr size_t kSignatureBytes = 64;
constexpr size_t kSeedBytes = 32;

struct VrfOutput {
    Bytes32 beta{};   // first 32 bytes of the VRF hash, interpreted big-endian
    Bytes80 proof{};
};

struct VrfKeyPair {
    Bytes32 public_key{};
    Bytes32 secret_seed{};
};

struct SigKeyPair {
    Bytes32 public_key{};
    Bytes64 secret_key{};  // ed25519 layout: seed || public key
};

// Verifiable random function: deterministic per (key, input), publicly
// verifiable against the public key, unpredictable without the secret.
class VrfScheme {
  public:
    virtual ~VrfScheme() = default;
    virtual VrfKeyPair keygen(const Bytes32& seed) const = 0;
    virtual VrfOutput eval(const VrfKeyPair& key, ByteView msg) const = 0;
    virtual bool verify(const Bytes32& public_key, ByteView msg, const Bytes32& beta,
                        const Bytes80& proof) const = 0;
    // Beta without the proof, when the backend can produce it cheaper than a
    // full eval(). nullopt means callers must fall back to eval(). Must agree
    // with eval().beta whenever present.
    virtual std::optional<Bytes32> eval_beta_cheap(const VrfKeyPair&, ByteView) const {
        return std::nullopt;
    }
    virtual std::string_view name() const = 0;
};

// Detached signatures over arbitrary messages.
class SigScheme {
  public:
    virtual ~SigScheme() = default;
    virtual SigKeyPair keygen(const Bytes32& seed) const = 0;
    virtual Bytes64 sign(const SigKeyPair& key, ByteView msg) const = 0;
    virtual bool verify(const Bytes32& public_key, ByteView msg, const Bytes64& sig) const = 0;
    virtual std::string_view name() const = 0;
};

struct CryptoSuite {
    const VrfScheme* vrf;
    const SigScheme* sig;
    std::string_view name;
};

// Production backend: ECVRF over edwards25519 (Elligator2/SHA-512 suite) and
// Ed25519 signatures, both on libsodium.
const CryptoSuite& real_crypto();

// Statistical backend for large simulation campaigns: keyed BLAKE2b in place
// of the curve operations, verified by recomputation. Identical wire sizes
// and outcome distributions; none of the hiding properties. Never use it
// outside the simulator.
const CryptoSuite& sim_crypto();

const CryptoSuite& crypto_by_name(std::string_view name);  // "real" | "fast"

// Keyed pseudorandom function for the server-computed variant:
// HMAC-SHA-256(key, msg), full 32-byte tag.
Bytes32 prf_eval(ByteView key, ByteView msg);

// Fresh keypairs from the OS entropy source.
VrfKeyPair vrf_keygen_random(const VrfScheme& scheme);
SigKeyPair sig_keygen_random(const SigScheme& scheme);

// Round index on the wire and as PRF/VRF input: 8-byte big-endian.
inline std::array<uint8_t, 8> encode_round(uint64_t round) { return be64(round); }

// Randomness values compare as 256-bit big-endian integers.
mpz_class beta_to_int(const Bytes32& beta);

inline int compare_beta(const Bytes32& a, const Bytes32& b) {
    return std::memcmp(a.data(), b.data(), a.size());
}

Bytes32 sha256(ByteView msg);

}  // namespace sortition
