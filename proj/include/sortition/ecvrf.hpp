#pragma once

#include <optional>

#include "sortition/bytes.hpp"

namespace sortition::ecvrf {

// ECVRF over edwards25519 with SHA-512 and the Elligator2 hash-to-curve
// (ciphersuite byte 0x04, pre-standard "v03" wire semantics: 80-byte proofs
// Gamma(32) || c(16) || s(32), output hash without a trailing domain byte).
//
// Built on libsodium's ristretto-free ed25519 group API.
// crypto_core_ed25519_from_uniform is the exact Elligator2 + cofactor-clear
// map required here: the encoded-point sign bit comes from the input's top
// bit, which hash_to_curve clears, matching the reference construction that
// decodes the mapped y with sign 0.

constexpr size_t kProofBytes = 80;
constexpr size_t kOutputBytes = 64;
constexpr size_t kPublicKeyBytes = 32;
constexpr size_t kSeedBytes = 32;

struct KeyPair {
    Bytes32 public_key{};
    Bytes32 seed{};
};

KeyPair keypair_from_seed(const Bytes32& seed);

// Deterministic proof for msg under the key expanded from seed.
Bytes80 prove(const Bytes32& seed, ByteView msg);

// Hash of the proof's Gamma component; what both prover and verifier output.
// Empty when Gamma does not decode to a valid group element.
std::optional<Bytes64> proof_to_hash(const Bytes80& proof);

// Full verification: recomputes the challenge from the proof equations.
// Returns the 64-byte VRF output when the proof is valid for (pk, msg).
std::optional<Bytes64> verify(const Bytes32& public_key, ByteView msg, const Bytes80& proof);

// Exposed for tests: the Elligator2 hash-to-curve of msg under pk.
Bytes32 hash_to_curve(const Bytes32& public_key, ByteView msg);

}  // namespace sortition::ecvrf
