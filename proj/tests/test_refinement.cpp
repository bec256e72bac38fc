#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "sortition/refinement.hpp"
#include "sortition/rng.hpp"

using namespace sortition;
using namespace sortition::refine;

namespace {

// Ten clients where the two slowest and the two lowest-quality are disjoint.
std::vector<ClientUtility> fixture() {
    std::vector<ClientUtility> p;
    p.push_back({1, 100.0, 50, 1.0});
    p.push_back({2, 90.0, 90, 1.0});
    p.push_back({3, 50.0, 5, 1.0});
    p.push_back({4, 10.0, 6, 1.0});
    for (uint64_t i = 5; i <= 10; ++i)
        p.push_back({i, 20.0 + static_cast<double>(i), 100 + i, 1.0});
    return p;
}

}  // namespace

TEST_CASE("scores") {
    ClientUtility u{7, 5.0, 100, 2.0};
    CHECK(data_quality(u) == 200.0);
    CHECK(oort_score(u, 10.0, 0.5) == 200.0);  // on time, no discount
    ClientUtility slow{8, 20.0, 100, 2.0};
    CHECK(oort_score(slow, 10.0, 0.5) == doctest::Approx(141.4213562373095).epsilon(1e-12));
    CHECK(oort_score(slow, 10.0, 0.0) == 200.0);
    CHECK_THROWS_AS(oort_score(ClientUtility{9, 0.0, 1, 1.0}, 10.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(oort_score(u, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("strategy names") {
    CHECK(strategy_by_name("or") == Strategy::Or);
    CHECK(strategy_by_name("and") == Strategy::And);
    CHECK(strategy_by_name("joint") == Strategy::Joint);
    CHECK(strategy_name(Strategy::Joint) == "joint");
    CHECK_THROWS_AS(strategy_by_name("xor"), std::invalid_argument);
}

TEST_CASE("exclusion strategies on the disjoint fixture") {
    auto pop = fixture();
    RefineParams params;
    params.exclusion = Ratio{1, 5};  // k = 2
    params.deadline = 40.0;
    params.penalty = 1.0;

    params.strategy = Strategy::And;
    CHECK(select_excluded(pop, params).empty());

    params.strategy = Strategy::Or;
    params.capped = false;
    CHECK(select_excluded(pop, params) == std::vector<uint64_t>{1, 2, 3, 4});

    params.capped = true;
    // Worst combined rank: client 1 (slowest + mid quality) and client 3
    // (lowest quality + third slowest) share rank sum 2.
    CHECK(select_excluded(pop, params) == std::vector<uint64_t>{1, 3});

    params.strategy = Strategy::Joint;
    // Discounted scores: 3 -> 4, 4 -> 6, 1 -> 20, 2 -> 40, rest >= 105.
    CHECK(select_excluded(pop, params) == std::vector<uint64_t>{3, 4});
}

TEST_CASE("exclusion edge cases") {
    auto pop = fixture();
    RefineParams params;
    params.exclusion = Ratio{0, 1};
    CHECK(select_excluded(pop, params).empty());

    params.exclusion = Ratio{1, 1};
    CHECK_THROWS_AS(select_excluded(pop, params), std::invalid_argument);
    params.exclusion = Ratio{3, 2};
    CHECK_THROWS_AS(select_excluded(pop, params), std::invalid_argument);

    // floor semantics: d = 1/4 of 10 clients is k = 2
    params.exclusion = Ratio{1, 4};
    params.strategy = Strategy::Joint;
    params.deadline = 40.0;
    CHECK(select_excluded(pop, params).size() == 2);

    // 9/10 keeps one client
    params.exclusion = Ratio{9, 10};
    CHECK(select_excluded(pop, params).size() == 9);

    // ties break toward the smaller id
    std::vector<ClientUtility> flat;
    for (uint64_t i = 1; i <= 6; ++i) flat.push_back({i, 2.0, 10, 1.0});
    RefineParams tie;
    tie.exclusion = Ratio{1, 2};
    tie.strategy = Strategy::Joint;
    tie.deadline = 5.0;
    CHECK(select_excluded(flat, tie) == std::vector<uint64_t>{1, 2, 3});
    tie.strategy = Strategy::Or;
    CHECK(select_excluded(flat, tie) == std::vector<uint64_t>{1, 2, 3});
    tie.strategy = Strategy::And;
    CHECK(select_excluded(flat, tie) == std::vector<uint64_t>{1, 2, 3});
}

TEST_CASE("strategy size relations on a synthetic population") {
    std::vector<uint64_t> ids;
    for (uint64_t i = 1; i <= 200; ++i) ids.push_back(i);
    auto pop = synth_population(ids, 424242);
    RefineParams params;
    params.exclusion = Ratio{3, 20};  // k = 30
    params.deadline = 1.0;
    params.penalty = 1.2;

    params.strategy = Strategy::Joint;
    auto joint = select_excluded(pop, params);
    CHECK(joint.size() == 30);

    params.strategy = Strategy::And;
    auto both = select_excluded(pop, params);
    params.strategy = Strategy::Or;
    params.capped = false;
    auto any = select_excluded(pop, params);
    params.capped = true;
    auto capped = select_excluded(pop, params);

    CHECK(both.size() <= 30);
    CHECK(capped.size() == std::min<size_t>(30, any.size()));
    CHECK(any.size() >= 30);
    CHECK(any.size() <= 60);
    // the intersection and the cap are both subsets of the union
    std::set<uint64_t> anyset(any.begin(), any.end());
    for (uint64_t id : both) CHECK(anyset.count(id));
    for (uint64_t id : capped) CHECK(anyset.count(id));
}

TEST_CASE("worst-case base rate") {
    // deleting a fifth of the honest population lifts a 1% base rate to
    // 1.25%: a 25% relative increase, exactly
    mpq_class rate = worst_case_base_rate_exact(8, 800, Ratio{1, 5});
    CHECK(rate == mpq_class(1, 80));
    mpq_class ten_eight_hundred(10, 800);
    ten_eight_hundred.canonicalize();
    CHECK(rate == ten_eight_hundred);
    mpq_class baseline(8, 800);
    baseline.canonicalize();
    mpq_class ratio = rate / baseline;
    ratio.canonicalize();
    CHECK(ratio == mpq_class(5, 4));
    CHECK(worst_case_base_rate(8, 800, Ratio{1, 5}) ==
          doctest::Approx(0.0125).epsilon(1e-15));

    CHECK(worst_case_base_rate_exact(900, 1000, Ratio{1, 5}) == 1);
    CHECK(worst_case_base_rate_exact(0, 1000, Ratio{1, 5}) == 0);
    CHECK_THROWS_AS(worst_case_base_rate_exact(1, 0, Ratio{1, 5}), std::invalid_argument);
    CHECK_THROWS_AS(worst_case_base_rate_exact(1, 10, Ratio{1, 1}), std::invalid_argument);

    // monotone in d
    double prev = 0.0;
    for (uint64_t num = 0; num < 10; ++num) {
        double r = worst_case_base_rate(8, 800, Ratio{num, 10});
        CHECK(r >= prev);
        prev = r;
    }
}

TEST_CASE("Zipf utility gain") {
    CHECK(zipf_quality_gain(0.2, 1.2) == doctest::Approx(1.3070494407390914).epsilon(1e-12));
    CHECK(zipf_quality_gain(0.0, 1.2) == 1.0);
    CHECK_THROWS_AS(zipf_quality_gain(1.0, 1.2), std::invalid_argument);
    CHECK_THROWS_AS(zipf_quality_gain(-0.1, 1.2), std::invalid_argument);
    double prev = 1.0;
    for (double d = 0.05; d < 0.9; d += 0.05) {
        double g = zipf_quality_gain(d, 1.2);
        CHECK(g > prev);
        prev = g;
    }
}

TEST_CASE("synthetic population shape") {
    std::vector<uint64_t> ids;
    for (uint64_t i = 1; i <= 50; ++i) ids.push_back(i * 3);
    auto a = synth_population(ids, 99, 1.2);
    auto b = synth_population(ids, 99, 1.2);
    REQUIRE(a.size() == 50);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].client_id == ids[i]);
        CHECK(a[i].client_id == b[i].client_id);
        CHECK(a[i].latency == b[i].latency);
        CHECK(a[i].dataset_size == b[i].dataset_size);
        CHECK(a[i].loss_rms == b[i].loss_rms);
        CHECK(a[i].dataset_size >= 10);
        CHECK(a[i].dataset_size <= 1000);
        CHECK(a[i].loss_rms >= 0.5);
        CHECK(a[i].loss_rms < 4.0);
    }
    auto c = synth_population(ids, 100, 1.2);
    bool moved = false;
    for (size_t i = 0; i < a.size(); ++i) moved = moved || a[i].latency != c[i].latency;
    CHECK(moved);

    // latencies are the Zipf profile, reshuffled
    std::vector<double> lat;
    for (const auto& u : a) lat.push_back(u.latency);
    std::sort(lat.begin(), lat.end(), std::greater<>());
    for (size_t i = 0; i < lat.size(); ++i)
        CHECK(lat[i] ==
              doctest::Approx(10.0 * std::pow(double(i + 1), -1.2)).epsilon(1e-12));
    CHECK(lat.front() == 10.0);
}
