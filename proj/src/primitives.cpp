#include "sortition/primitives.hpp"

#include <sodium.h>

#include <cstring>
#include <stdexcept>

#include "sortition/ecvrf.hpp"

namespace sortition {

namespace {

void require_sodium() {
    if (sodium_init() < 0) throw std::runtime_error("libsodium init failed");
}

// ---------------------------------------------------------------- real ----

class Ed25519Vrf final : public VrfScheme {
  public:
    VrfKeyPair keygen(const Bytes32& seed) const override {
        auto kp = ecvrf::keypair_from_seed(seed);
        return {kp.public_key, kp.seed};
    }

    VrfOutput eval(const VrfKeyPair& key, ByteView msg) const override {
        VrfOutput out;
        out.proof = ecvrf::prove(key.secret_seed, msg);
        auto hash = ecvrf::proof_to_hash(out.proof);
        if (!hash) throw std::runtime_error("vrf eval produced an undecodable proof");
        std::memcpy(out.beta.data(), hash->data(), kRandomnessBytes);
        return out;
    }

    bool verify(const Bytes32& public_key, ByteView msg, const Bytes32& beta,
                const Bytes80& proof) const override {
        auto hash = ecvrf::verify(public_key, msg, proof);
        if (!hash) return false;
        return std::memcmp(hash->data(), beta.data(), kRandomnessBytes) == 0;
    }

    std::string_view name() const override { return "ecvrf-ed25519-sha512-elligator2"; }
};

class Ed25519Sig final : public SigScheme {
  public:
    SigKeyPair keygen(const Bytes32& seed) const override {
        require_sodium();
        SigKeyPair kp;
        uint8_t sk[crypto_sign_SECRETKEYBYTES];
        if (crypto_sign_seed_keypair(kp.public_key.data(), sk, seed.data()) != 0) {
            throw std::runtime_error("signature keygen failed");
        }
        std::memcpy(kp.secret_key.data(), sk, sizeof sk);
        sodium_memzero(sk, sizeof sk);
        return kp;
    }

    Bytes64 sign(const SigKeyPair& key, ByteView msg) const override {
        require_sodium();
        Bytes64 sig{};
        if (crypto_sign_detached(sig.data(), nullptr, msg.data(), msg.size(),
                                 key.secret_key.data()) != 0) {
            throw std::runtime_error("signing failed");
        }
        return sig;
    }

    bool verify(const Bytes32& public_key, ByteView msg, const Bytes64& sig) const override {
        require_sodium();
        return crypto_sign_verify_detached(sig.data(), msg.data(), msg.size(),
                                           public_key.data()) == 0;
    }

    std::string_view name() const override { return "ed25519"; }
};

// ---------------------------------------------------------------- fast ----
//
// Keyed-hash stand-ins for campaign-scale simulation. Public key = hash of
// the seed; outputs are keyed BLAKE2b of the message, so evaluation and
// verification are both recomputation. Deterministic, uniform, and honest
// about wire sizes; offers no secrecy (the simulator's adversaries never
// exploit that, they act only through the strategy interface).

void blake2b(uint8_t* out, size_t out_len, ByteView key, ByteView msg) {
    if (crypto_generichash(out, out_len, msg.data(), msg.size(), key.data(), key.size()) != 0) {
        throw std::runtime_error("blake2b failed");
    }
}

constexpr uint8_t kSimVrfKeyDomain[] = {'s', 'i', 'm', 'v', 'r', 'f', '-', 'k'};
constexpr uint8_t kSimSigKeyDomain[] = {'s', 'i', 'm', 's', 'i', 'g', '-', 'k'};

class SimVrf final : public VrfScheme {
  public:
    VrfKeyPair keygen(const Bytes32& seed) const override {
        require_sodium();
        VrfKeyPair kp;
        kp.secret_seed = seed;
        blake2b(kp.public_key.data(), 32, ByteView(kSimVrfKeyDomain, sizeof kSimVrfKeyDomain),
                seed);
        return kp;
    }

    VrfOutput eval(const VrfKeyPair& key, ByteView msg) const override {
        VrfOutput out;
        compute(key.public_key, msg, out.beta, out.proof);
        return out;
    }

    bool verify(const Bytes32& public_key, ByteView msg, const Bytes32& beta,
                const Bytes80& proof) const override {
        Bytes32 want_beta;
        Bytes80 want_proof;
        compute(public_key, msg, want_beta, want_proof);
        return std::memcmp(want_beta.data(), beta.data(), 32) == 0 &&
               std::memcmp(want_proof.data(), proof.data(), 80) == 0;
    }

    std::optional<Bytes32> eval_beta_cheap(const VrfKeyPair& key, ByteView msg) const override {
        Bytes32 beta;
        blake2b(beta.data(), 32, key.public_key, msg);
        return beta;
    }

    std::string_view name() const override { return "sim-keyed-hash-vrf"; }

  private:
    static void compute(const Bytes32& public_key, ByteView msg, Bytes32& beta, Bytes80& proof) {
        require_sodium();
        blake2b(beta.data(), 32, public_key, msg);
        uint8_t tagged[1 + 64];
        tagged[0] = 0x01;
        size_t n = msg.size() < 64 ? msg.size() : 64;
        std::memcpy(tagged + 1, msg.data(), n);
        blake2b(proof.data(), 64, public_key, ByteView(tagged, 1 + n));
        // Pad the 80-byte wire proof; the first 64 bytes carry the binding.
        std::memcpy(proof.data() + 64, beta.data(), 16);
    }
};

class SimSig final : public SigScheme {
  public:
    SigKeyPair keygen(const Bytes32& seed) const override {
        require_sodium();
        SigKeyPair kp;
        std::memcpy(kp.secret_key.data(), seed.data(), 32);
        blake2b(kp.public_key.data(), 32, ByteView(kSimSigKeyDomain, sizeof kSimSigKeyDomain),
                seed);
        std::memcpy(kp.secret_key.data() + 32, kp.public_key.data(), 32);
        return kp;
    }

    Bytes64 sign(const SigKeyPair& key, ByteView msg) const override {
        Bytes32 pk;
        std::memcpy(pk.data(), key.secret_key.data() + 32, 32);
        return mac(pk, msg);
    }

    bool verify(const Bytes32& public_key, ByteView msg, const Bytes64& sig) const override {
        Bytes64 want = mac(public_key, msg);
        return std::memcmp(want.data(), sig.data(), 64) == 0;
    }

    std::string_view name() const override { return "sim-keyed-hash-sig"; }

  private:
    // Hash the message once, MAC the digest: long identical messages get
    // verified against many signer keys without rehashing the body.
    static Bytes64 mac(const Bytes32& public_key, ByteView msg) {
        require_sodium();
        Bytes32 digest;
        blake2b(digest.data(), 32, ByteView(), msg);
        Bytes64 out{};
        blake2b(out.data(), 64, public_key, digest);
        return out;
    }
};

}  // namespace

const CryptoSuite& real_crypto() {
    static const Ed25519Vrf vrf;
    static const Ed25519Sig sig;
    static const CryptoSuite suite{&vrf, &sig, "real"};
    return suite;
}

const CryptoSuite& sim_crypto() {
    static const SimVrf vrf;
    static const SimSig sig;
    static const CryptoSuite suite{&vrf, &sig, "fast"};
    return suite;
}

const CryptoSuite& crypto_by_name(std::string_view name) {
    if (name == "real") return real_crypto();
    if (name == "fast") return sim_crypto();
    throw std::invalid_argument("unknown crypto backend: " + std::string(name));
}

Bytes32 prf_eval(ByteView key, ByteView msg) {
    require_sodium();
    crypto_auth_hmacsha256_state st;
    crypto_auth_hmacsha256_init(&st, key.data(), key.size());
    crypto_auth_hmacsha256_update(&st, msg.data(), msg.size());
    Bytes32 out{};
    crypto_auth_hmacsha256_final(&st, out.data());
    return out;
}

VrfKeyPair vrf_keygen_random(const VrfScheme& scheme) {
    require_sodium();
    Bytes32 seed;
    randombytes_buf(seed.data(), seed.size());
    return scheme.keygen(seed);
}

SigKeyPair sig_keygen_random(const SigScheme& scheme) {
    require_sodium();
    Bytes32 seed;
    randombytes_buf(seed.data(), seed.size());
    return scheme.keygen(seed);
}

mpz_class beta_to_int(const Bytes32& beta) {
    mpz_class v;
    mpz_import(v.get_mpz_t(), beta.size(), 1, 1, 1, 0, beta.data());
    return v;
}

Bytes32 sha256(ByteView msg) {
    require_sodium();
    Bytes32 out{};
    crypto_hash_sha256(out.data(), msg.data(), msg.size());
    return out;
}

}  // namespace sortition
