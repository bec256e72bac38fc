#pragma once

#include <cmath>
#include <limits>

namespace sortition {

// Probability carried in natural-log space so tails far below DBL_MIN stay
// representable. log_e == -inf encodes exact zero, log_e == 0 exact one.
struct LogProb {
    double log_e = -std::numeric_limits<double>::infinity();

    static LogProb zero() { return {}; }
    static LogProb one() { return {0.0}; }
    static LogProb from_log(double ln) { return {ln}; }
    static LogProb from_linear(double p) {
        if (p <= 0.0) return zero();
        return {std::log(p)};
    }

    double linear() const { return std::exp(log_e); }
    double log10() const {
        if (std::isinf(log_e)) return log_e;
        return log_e / 2.302585092994045684017991;  // ln(10)
    }
    bool is_zero() const { return std::isinf(log_e) && log_e < 0; }
};

}  // namespace sortition
