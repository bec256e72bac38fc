#pragma once

#include <cstdint>
#include <random>

namespace sortition {

// Deterministic RNG with implementation-independent bounded draws.
// std::uniform_int_distribution is not pinned by the standard, so bounded
// sampling is done here with rejection to keep transcripts byte-identical
// across toolchains.
class DetRng {
  public:
    explicit DetRng(uint64_t seed) : engine_(seed) {}

    uint64_t u64() { return engine_(); }

    // Uniform in [0, bound), bound >= 1.
    uint64_t below(uint64_t bound) {
        if (bound <= 1) return 0;
        uint64_t mask = ~uint64_t{0} >> __builtin_clzll(bound | 1);
        for (;;) {
            uint64_t v = engine_() & mask;
            if (v < bound) return v;
        }
    }

    // Uniform double in [0, 1) with 53 random bits.
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    void fill(uint8_t* out, size_t n) {
        size_t i = 0;
        while (i < n) {
            uint64_t v = engine_();
            for (int b = 0; b < 8 && i < n; ++b, ++i) {
                out[i] = static_cast<uint8_t>(v >> (8 * b));
            }
        }
    }

    // Stable child-seed derivation (splitmix64 finalizer over the pair), so
    // per-trial and per-client streams are independent of scheduling order.
    static uint64_t derive(uint64_t seed, uint64_t index) {
        uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace sortition
