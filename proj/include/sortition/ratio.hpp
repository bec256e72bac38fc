#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

#include <gmpxx.h>

namespace sortition {

// Exact nonnegative rational, used for over-selection factors and exclusion
// fractions so that thresholds and closed-form rates stay exact. Parsed from
// decimal strings ("1.3" -> 13/10) to avoid binary floating point drift.
struct Ratio {
    uint64_t num = 1;
    uint64_t den = 1;

    Ratio() = default;
    Ratio(uint64_t n, uint64_t d) : num(n), den(d) {
        if (den == 0) throw std::invalid_argument("ratio with zero denominator");
        reduce();
    }

    static Ratio from_decimal(const std::string& text);

    void reduce() {
        uint64_t g = std::gcd(num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    mpq_class to_mpq() const { return mpq_class(num, den); }

    bool operator==(const Ratio& o) const { return num == o.num && den == o.den; }
    std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
};

inline Ratio Ratio::from_decimal(const std::string& text) {
    if (text.empty()) throw std::invalid_argument("empty ratio literal");
    if (text.find('/') != std::string::npos) {
        auto slash = text.find('/');
        uint64_t n = std::stoull(text.substr(0, slash));
        uint64_t d = std::stoull(text.substr(slash + 1));
        return Ratio(n, d);
    }
    auto dot = text.find('.');
    if (dot == std::string::npos) {
        return Ratio(std::stoull(text), 1);
    }
    std::string whole = text.substr(0, dot);
    std::string frac = text.substr(dot + 1);
    if (frac.empty() && whole.empty()) throw std::invalid_argument("invalid ratio literal");
    uint64_t den = 1;
    for (size_t i = 0; i < frac.size(); ++i) {
        if (den > UINT64_MAX / 10) throw std::invalid_argument("ratio literal with too many digits");
        den *= 10;
    }
    uint64_t num = 0;
    std::string all = whole + frac;
    for (char c : all) {
        if (c < '0' || c > '9') throw std::invalid_argument("invalid ratio literal");
        if (num > (UINT64_MAX - 9) / 10) throw std::invalid_argument("ratio literal out of range");
        num = num * 10 + static_cast<uint64_t>(c - '0');
    }
    return Ratio(num, den);
}

}  // namespace sortition
