#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

namespace sortition::bounds {

// Privacy accounting is pluggable: the selection bounds only need a callable
// E(s, k, r, sigma, delta') that is non-decreasing in k and r and
// non-increasing in delta'. No production accountant ships here.
class PrivacyAccountant {
  public:
    virtual ~PrivacyAccountant() = default;
    virtual double epsilon(uint64_t target, uint64_t dishonest_participants, uint64_t rounds,
                           double sigma, double delta_prime) const = 0;
    virtual std::string_view name() const = 0;
};

// Fixed value; isolates the feasibility scan from accountant behavior.
class ConstantAccountant final : public PrivacyAccountant {
  public:
    explicit ConstantAccountant(double value) : value_(value) {}
    double epsilon(uint64_t, uint64_t, uint64_t, double, double) const override { return value_; }
    std::string_view name() const override { return "constant"; }

  private:
    double value_;
};

// Test accountant: epsilon = k + r. Makes the minimization surface trivial to
// enumerate independently.
class MockAccountant final : public PrivacyAccountant {
  public:
    double epsilon(uint64_t, uint64_t k, uint64_t r, double, double) const override {
        return static_cast<double>(k) + static_cast<double>(r);
    }
    std::string_view name() const override { return "mock"; }
};

// Simplified Gaussian-mechanism stand-in, NOT a production accountant.
// Models r rounds of a Gaussian mechanism whose per-round noise multiplier
// shrinks when k of the s participants contribute no noise share:
// z^2 = sigma^2 * (s - k) / s, per-round Renyi divergence a/(2 z^2), r-fold
// composition, optimal conversion to (epsilon, delta'):
//   epsilon = r/(2 z^2) + 2 * sqrt(r/(2 z^2) * ln(1/delta')).
class GaussianStandInAccountant final : public PrivacyAccountant {
  public:
    double epsilon(uint64_t target, uint64_t dishonest_participants, uint64_t rounds, double sigma,
                   double delta_prime) const override;
    std::string_view name() const override { return "gaussian"; }
};

// name: "mock" | "gaussian" | "constant" (constant requires a value).
std::unique_ptr<PrivacyAccountant> accountant_by_name(std::string_view name,
                                                      double constant_value = 1.0);

}  // namespace sortition::bounds
