#include "sortition/accountant.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sortition::bounds {

double GaussianStandInAccountant::epsilon(uint64_t target, uint64_t dishonest_participants,
                                          uint64_t rounds, double sigma,
                                          double delta_prime) const {
    if (rounds == 0) return 0.0;
    if (dishonest_participants >= target || sigma <= 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    double z2 = sigma * sigma * static_cast<double>(target - dishonest_participants) /
                static_cast<double>(target);
    double base = static_cast<double>(rounds) / (2.0 * z2);
    double log_inv_delta = delta_prime < 1.0 ? -std::log(delta_prime) : 0.0;
    return base + 2.0 * std::sqrt(base * log_inv_delta);
}

std::unique_ptr<PrivacyAccountant> accountant_by_name(std::string_view name,
                                                      double constant_value) {
    if (name == "mock") return std::make_unique<MockAccountant>();
    if (name == "gaussian") return std::make_unique<GaussianStandInAccountant>();
    if (name == "constant") return std::make_unique<ConstantAccountant>(constant_value);
    throw std::invalid_argument("unknown accountant: " + std::string(name));
}

}  // namespace sortition::bounds
