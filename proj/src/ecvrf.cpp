#include "sortition/ecvrf.hpp"

#include <sodium.h>

#include <cstring>
#include <stdexcept>

namespace sortition::ecvrf {

namespace {

constexpr uint8_t kSuite = 0x04;

struct ExpandedKey {
    uint8_t scalar[32];      // secret scalar x, reduced mod L
    uint8_t nonce_seed[32];  // upper half of SHA-512(seed)
    uint8_t public_key[32];  // x*B
};

void expand_seed(const Bytes32& seed, ExpandedKey& out) {
    uint8_t h[64];
    crypto_hash_sha512(h, seed.data(), seed.size());
    h[0] &= 248;
    h[31] &= 127;
    h[31] |= 64;
    // The clamped scalar, reduced mod L; same group element as the RFC 8032
    // key since B generates the prime-order subgroup.
    uint8_t wide[64] = {0};
    std::memcpy(wide, h, 32);
    crypto_core_ed25519_scalar_reduce(out.scalar, wide);
    std::memcpy(out.nonce_seed, h + 32, 32);
    if (crypto_scalarmult_ed25519_base_noclamp(out.public_key, out.scalar) != 0) {
        throw std::runtime_error("vrf key expansion failed");
    }
    sodium_memzero(h, sizeof h);
    sodium_memzero(wide, sizeof wide);
}

// SHA-512(suite || 0x01 || pk || msg), truncated to 32 bytes with the top bit
// cleared, then mapped through Elligator2 with the cofactor cleared.
Bytes32 hash_to_curve_impl(const Bytes32& public_key, ByteView msg) {
    crypto_hash_sha512_state st;
    crypto_hash_sha512_init(&st);
    const uint8_t prefix[2] = {kSuite, 0x01};
    crypto_hash_sha512_update(&st, prefix, 2);
    crypto_hash_sha512_update(&st, public_key.data(), public_key.size());
    crypto_hash_sha512_update(&st, msg.data(), msg.size());
    uint8_t h[64];
    crypto_hash_sha512_final(&st, h);
    uint8_t r_string[32];
    std::memcpy(r_string, h, 32);
    r_string[31] &= 0x7f;
    Bytes32 point{};
    if (crypto_core_ed25519_from_uniform(point.data(), r_string) != 0) {
        throw std::runtime_error("elligator2 map failed");
    }
    return point;
}

// c = first 16 bytes of SHA-512(suite || 0x02 || H || Gamma || U || V), as a
// 32-byte scalar with the upper half zero.
void hash_points(const uint8_t* h, const uint8_t* gamma, const uint8_t* u, const uint8_t* v,
                 uint8_t c_scalar[32]) {
    crypto_hash_sha512_state st;
    crypto_hash_sha512_init(&st);
    const uint8_t prefix[2] = {kSuite, 0x02};
    crypto_hash_sha512_update(&st, prefix, 2);
    crypto_hash_sha512_update(&st, h, 32);
    crypto_hash_sha512_update(&st, gamma, 32);
    crypto_hash_sha512_update(&st, u, 32);
    crypto_hash_sha512_update(&st, v, 32);
    uint8_t digest[64];
    crypto_hash_sha512_final(&st, digest);
    std::memset(c_scalar, 0, 32);
    std::memcpy(c_scalar, digest, 16);
}

// Scalar strictly below the group order L (little-endian compare).
bool scalar_in_range(const uint8_t s[32]) {
    static const uint8_t L[32] = {0xed, 0xd3, 0xf5, 0x5c, 0x1a, 0x63, 0x12, 0x58,
                                  0xd6, 0x9c, 0xf7, 0xa2, 0xde, 0xf9, 0xde, 0x14,
                                  0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,
                                  0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x10};
    for (int i = 31; i >= 0; --i) {
        if (s[i] < L[i]) return true;
        if (s[i] > L[i]) return false;
    }
    return false;
}

std::optional<Bytes64> gamma_to_hash(const uint8_t gamma[32]) {
    static const uint8_t eight[32] = {8};
    uint8_t cleared[32];
    if (crypto_scalarmult_ed25519_noclamp(cleared, eight, gamma) != 0) {
        return std::nullopt;
    }
    crypto_hash_sha512_state st;
    crypto_hash_sha512_init(&st);
    const uint8_t prefix[2] = {kSuite, 0x03};
    crypto_hash_sha512_update(&st, prefix, 2);
    crypto_hash_sha512_update(&st, cleared, 32);
    Bytes64 beta{};
    crypto_hash_sha512_final(&st, beta.data());
    return beta;
}

}  // namespace

KeyPair keypair_from_seed(const Bytes32& seed) {
    if (sodium_init() < 0) throw std::runtime_error("libsodium init failed");
    ExpandedKey key{};
    expand_seed(seed, key);
    KeyPair out;
    std::memcpy(out.public_key.data(), key.public_key, 32);
    out.seed = seed;
    sodium_memzero(&key, sizeof key);
    return out;
}

Bytes32 hash_to_curve(const Bytes32& public_key, ByteView msg) {
    if (sodium_init() < 0) throw std::runtime_error("libsodium init failed");
    return hash_to_curve_impl(public_key, msg);
}

Bytes80 prove(const Bytes32& seed, ByteView msg) {
    if (sodium_init() < 0) throw std::runtime_error("libsodium init failed");
    ExpandedKey key{};
    expand_seed(seed, key);

    Bytes32 h_point = hash_to_curve_impl(*reinterpret_cast<const Bytes32*>(key.public_key), msg);

    uint8_t gamma[32];
    if (crypto_scalarmult_ed25519_noclamp(gamma, key.scalar, h_point.data()) != 0) {
        throw std::runtime_error("vrf prove: scalar multiplication failed");
    }

    // Deterministic nonce: SHA-512(nonce_seed || H) reduced mod L.
    uint8_t k_wide[64];
    {
        crypto_hash_sha512_state st;
        crypto_hash_sha512_init(&st);
        crypto_hash_sha512_update(&st, key.nonce_seed, 32);
        crypto_hash_sha512_update(&st, h_point.data(), 32);
        crypto_hash_sha512_final(&st, k_wide);
    }
    uint8_t k[32];
    crypto_core_ed25519_scalar_reduce(k, k_wide);

    uint8_t u_point[32], v_point[32];
    if (crypto_scalarmult_ed25519_base_noclamp(u_point, k) != 0 ||
        crypto_scalarmult_ed25519_noclamp(v_point, k, h_point.data()) != 0) {
        throw std::runtime_error("vrf prove: nonce multiplication failed");
    }

    uint8_t c_scalar[32];
    hash_points(h_point.data(), gamma, u_point, v_point, c_scalar);

    uint8_t cx[32], s_scalar[32];
    crypto_core_ed25519_scalar_mul(cx, c_scalar, key.scalar);
    crypto_core_ed25519_scalar_add(s_scalar, k, cx);

    Bytes80 proof{};
    std::memcpy(proof.data(), gamma, 32);
    std::memcpy(proof.data() + 32, c_scalar, 16);
    std::memcpy(proof.data() + 48, s_scalar, 32);
    sodium_memzero(&key, sizeof key);
    sodium_memzero(k, sizeof k);
    sodium_memzero(k_wide, sizeof k_wide);
    return proof;
}

std::optional<Bytes64> proof_to_hash(const Bytes80& proof) {
    if (sodium_init() < 0) throw std::runtime_error("libsodium init failed");
    if (crypto_core_ed25519_is_valid_point(proof.data()) != 1) return std::nullopt;
    return gamma_to_hash(proof.data());
}

std::optional<Bytes64> verify(const Bytes32& public_key, ByteView msg, const Bytes80& proof) {
    if (sodium_init() < 0) throw std::runtime_error("libsodium init failed");
    if (crypto_core_ed25519_is_valid_point(public_key.data()) != 1) return std::nullopt;

    const uint8_t* gamma = proof.data();
    if (crypto_core_ed25519_is_valid_point(gamma) != 1) return std::nullopt;
    uint8_t c_scalar[32] = {0};
    std::memcpy(c_scalar, proof.data() + 32, 16);
    uint8_t s_scalar[32];
    std::memcpy(s_scalar, proof.data() + 48, 32);
    if (!scalar_in_range(s_scalar)) return std::nullopt;

    Bytes32 h_point = hash_to_curve_impl(public_key, msg);

    // U = s*B - c*Y ; V = s*H - c*Gamma. A zero challenge or degenerate
    // difference fails the group calls and the proof is rejected; honest
    // proofs hit these with negligible probability.
    uint8_t s_b[32], c_y[32], u_point[32];
    if (crypto_scalarmult_ed25519_base_noclamp(s_b, s_scalar) != 0) return std::nullopt;
    if (crypto_scalarmult_ed25519_noclamp(c_y, c_scalar, public_key.data()) != 0) return std::nullopt;
    if (crypto_core_ed25519_sub(u_point, s_b, c_y) != 0) return std::nullopt;

    uint8_t s_h[32], c_gamma[32], v_point[32];
    if (crypto_scalarmult_ed25519_noclamp(s_h, s_scalar, h_point.data()) != 0) return std::nullopt;
    if (crypto_scalarmult_ed25519_noclamp(c_gamma, c_scalar, gamma) != 0) return std::nullopt;
    if (crypto_core_ed25519_sub(v_point, s_h, c_gamma) != 0) return std::nullopt;

    uint8_t c_check[32];
    hash_points(h_point.data(), gamma, u_point, v_point, c_check);
    if (sodium_memcmp(c_check, c_scalar, 32) != 0) return std::nullopt;

    return gamma_to_hash(gamma);
}

}  // namespace sortition::ecvrf
