#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "fedsentinel/aggregation.hpp"
#include "fedsentinel/rng.hpp"

using namespace fedsentinel;

namespace {

// Builds a report whose flat values fit a minimal {d-1, 1} linear spec.
ClientReport make_report(int id, std::vector<double> values, std::size_t len = 1,
                         double sigma = 0.5) {
    REQUIRE(values.size() >= 2);
    ClientReport r;
    r.client_id = id;
    r.params.spec.layer_sizes = {int(values.size()) - 1, 1};
    r.params.values = std::move(values);
    r.data_length = len;
    r.sigma_raw = sigma;
    return r;
}

ScoreSet scores_of(const std::map<int, double>& normalized) {
    ScoreSet s;
    s.normalized = normalized;
    for (const auto& [id, v] : normalized) s.raw[id] = v;  // raw unused here
    return s;
}

DetectionOutcome honest_set(std::set<int> ids) {
    DetectionOutcome out;
    out.honest = std::move(ids);
    return out;
}

}  // namespace

TEST_CASE("fedavg basics") {
    SUBCASE("equal lengths average to the midpoint") {
        const std::vector<ClientReport> reports{make_report(0, {1.0, 1.0}, 5),
                                                make_report(1, {3.0, 3.0}, 5)};
        const ParamVector out = fedavg(reports);
        CHECK(out.values[0] == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(out.values[1] == doctest::Approx(2.0).epsilon(1e-15));
    }
    SUBCASE("single client is the identity") {
        const std::vector<ClientReport> reports{make_report(7, {0.5, -1.25, 3.0}, 42)};
        const ParamVector out = fedavg(reports);
        CHECK(out.values == std::vector<double>{0.5, -1.25, 3.0});
    }
    SUBCASE("length-weighted mean") {
        const std::vector<ClientReport> reports{make_report(0, {0.0, 0.0}, 3),
                                                make_report(1, {4.0, 4.0}, 1)};
        const ParamVector out = fedavg(reports);
        CHECK(out.values[0] == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(out.values[1] == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(fedavg({}), std::invalid_argument);
        const std::vector<ClientReport> bad{make_report(0, {1.0, 2.0}),
                                            make_report(1, {1.0, 2.0, 3.0})};
        CHECK_THROWS_AS(fedavg(bad), std::invalid_argument);
    }
}

TEST_CASE("trimmed mean drops the tails per coordinate") {
    std::vector<ClientReport> reports;
    const std::vector<double> first{1.0, 2.0, 3.0, 4.0, 100.0};
    const std::vector<double> second{1000.0, 40.0, 30.0, 20.0, 10.0};
    for (int i = 0; i < 5; ++i) reports.push_back(make_report(i, {first[i], second[i]}));

    SUBCASE("beta = 0.2 trims one value per side") {
        const ParamVector out = trimmed_mean(reports, 0.2);
        CHECK(out.values[0] == doctest::Approx(3.0).epsilon(1e-15));
        CHECK(out.values[1] == doctest::Approx(30.0).epsilon(1e-15));
    }
    SUBCASE("beta = 0 is the unweighted mean") {
        const ParamVector out = trimmed_mean(reports, 0.0);
        CHECK(out.values[0] == doctest::Approx(22.0).epsilon(1e-15));
        CHECK(out.values[1] == doctest::Approx(220.0).epsilon(1e-15));
    }
    SUBCASE("identical inputs are a fixed point for any valid beta") {
        std::vector<ClientReport> same;
        for (int i = 0; i < 5; ++i) same.push_back(make_report(i, {2.5, -1.5}));
        for (double beta : {0.0, 0.2, 0.4}) {
            const ParamVector out = trimmed_mean(same, beta);
            CHECK(out.values[0] == 2.5);
            CHECK(out.values[1] == -1.5);
        }
    }
    SUBCASE("over-trimming throws") {
        const std::vector<ClientReport> two{make_report(0, {1.0, 1.0}),
                                            make_report(1, {2.0, 2.0})};
        CHECK_THROWS_AS(trimmed_mean(two, 0.5), std::invalid_argument);
        CHECK_THROWS_AS(trimmed_mean(reports, -0.1), std::invalid_argument);
    }
}

TEST_CASE("reweighted aggregate: uniform scores and lengths give the plain mean") {
    const std::vector<ClientReport> reports{make_report(0, {0.0, 3.0}, 10),
                                            make_report(1, {6.0, 0.0}, 10),
                                            make_report(2, {3.0, 6.0}, 10)};
    const auto [out, w] = reweighted_aggregate(
        reports, honest_set({0, 1, 2}), scores_of({{0, 0.4}, {1, 0.4}, {2, 0.4}}));
    CHECK(out.values[0] == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(out.values[1] == doctest::Approx(3.0).epsilon(1e-14));
    for (int id : {0, 1, 2}) {
        CHECK(w.w_orig.at(id) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        CHECK(w.r_norm.at(id) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        CHECK(w.w_final.at(id) == doctest::Approx(1.0 / 9.0).epsilon(1e-15));
    }
}

TEST_CASE("reweighted aggregate: two-client reference fixture") {
    // sigma = (0.25, 0.75), lengths = (30, 10). The confidence share and the
    // data share cancel into equal w_final (0.1875 each); the trailing length
    // factor then tips the combination to 0.75*theta_0 + 0.25*theta_1.
    const std::vector<ClientReport> reports{make_report(0, {2.0, -4.0}, 30),
                                            make_report(1, {10.0, 4.0}, 10)};
    const ScoreSet scores = scores_of({{0, 0.25}, {1, 0.75}});

    const auto [out, w] = reweighted_aggregate(reports, honest_set({0, 1}), scores);
    CHECK(w.w_orig.at(0) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(w.w_orig.at(1) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(w.r_norm.at(0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(w.r_norm.at(1) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(w.w_final.at(0) == doctest::Approx(0.1875).epsilon(1e-15));
    CHECK(w.w_final.at(1) == doctest::Approx(0.1875).epsilon(1e-15));
    CHECK(out.values[0] == doctest::Approx(0.75 * 2.0 + 0.25 * 10.0).epsilon(1e-14));
    CHECK(out.values[1] == doctest::Approx(0.75 * -4.0 + 0.25 * 4.0).epsilon(1e-14));

    // Dropping the extra length factor weights by w_final alone, which is
    // equal here, so the single-length variant is the midpoint.
    const auto [single, w2] =
        reweighted_aggregate(reports, honest_set({0, 1}), scores, true);
    CHECK(single.values[0] == doctest::Approx(6.0).epsilon(1e-14));
    CHECK(single.values[1] == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("reweighted aggregate: single honest client returns its own params") {
    const std::vector<ClientReport> reports{make_report(0, {1.0, 2.0}, 3),
                                            make_report(1, {9.0, 9.0}, 50)};
    const auto [out, w] =
        reweighted_aggregate(reports, honest_set({0}), scores_of({{0, 0.01}, {1, 1.0}}));
    CHECK(out.values == reports[0].params.values);
    CHECK(w.w_orig.at(0) == 1.0);
    CHECK(w.r_norm.at(0) == 1.0);
}

TEST_CASE("reweighted aggregate with full honest set, uniform sigma and length, equals fedavg") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<ClientReport> reports;
        std::map<int, double> normalized;
        const int n = 2 + int(rng.uniform_int(9));
        for (int i = 0; i < n; ++i) {
            std::vector<double> vals(6);
            for (double& v : vals) v = rng.normal() * 3.0;
            reports.push_back(make_report(i, std::move(vals), 17));
            normalized[i] = 0.6;
        }
        std::set<int> all;
        for (int i = 0; i < n; ++i) all.insert(i);
        const ParamVector avg = fedavg(reports);
        const auto [out, w] =
            reweighted_aggregate(reports, honest_set(all), scores_of(normalized));
        for (std::size_t k = 0; k < avg.values.size(); ++k)
            CHECK(std::abs(out.values[k] - avg.values[k]) <= 1e-12);
    }
}

TEST_CASE("reweighted aggregate: all-zero scores over H fall back to uniform shares") {
    // Raw scores {1, 1, 2} normalize to {0, 0, 1}; if detection keeps only
    // the two zero-score clients, r_norm must not divide by zero.
    const std::vector<ClientReport> reports{make_report(0, {1.0, 5.0}, 8),
                                            make_report(1, {3.0, 1.0}, 8),
                                            make_report(2, {100.0, 100.0}, 8)};
    const ScoreSet scores = scores_of({{0, 0.0}, {1, 0.0}, {2, 1.0}});
    const auto [out, w] = reweighted_aggregate(reports, honest_set({0, 1}), scores);
    CHECK(w.r_norm.at(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(w.r_norm.at(1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(out.values[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(out.values[1] == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("reweighted aggregate: weight shares sum to one") {
    Rng rng(7);
    std::vector<ClientReport> reports;
    std::map<int, double> normalized;
    for (int i = 0; i < 6; ++i) {
        std::vector<double> vals(4);
        for (double& v : vals) v = rng.normal();
        reports.push_back(make_report(i, std::move(vals), 1 + rng.uniform_int(40)));
        normalized[i] = rng.uniform01();
    }
    const auto [out, w] =
        reweighted_aggregate(reports, honest_set({0, 2, 3, 5}), scores_of(normalized));
    double sum_orig = 0.0, sum_rnorm = 0.0;
    for (const auto& [id, v] : w.w_orig) sum_orig += v;
    for (const auto& [id, v] : w.r_norm) sum_rnorm += v;
    CHECK(sum_orig == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sum_rnorm == doctest::Approx(1.0).epsilon(1e-12));
    for (const auto& [id, v] : w.w_final)
        CHECK(v == doctest::Approx(w.r_norm.at(id) * w.w_orig.at(id)).epsilon(1e-15));
    CHECK(w.w_orig.size() == 4);  // only honest clients carry weights
}

TEST_CASE("reweighted aggregate errors") {
    const std::vector<ClientReport> reports{make_report(0, {1.0, 1.0}),
                                            make_report(1, {2.0, 2.0})};
    CHECK_THROWS_AS(
        reweighted_aggregate(reports, honest_set({}), scores_of({{0, 0.5}, {1, 0.5}})),
        std::invalid_argument);
    CHECK_THROWS_AS(
        reweighted_aggregate(reports, honest_set({0, 1}), scores_of({{0, 0.5}})),
        std::invalid_argument);
    CHECK_THROWS_AS(
        reweighted_aggregate(reports, honest_set({0, 5}), scores_of({{0, 0.5}, {5, 0.5}})),
        std::invalid_argument);
}

TEST_CASE("convex combination bound holds on random instances") {
    Rng rng(1234);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 2 + int(rng.uniform_int(7));
        std::vector<ClientReport> reports;
        std::map<int, double> normalized;
        for (int i = 0; i < n; ++i) {
            std::vector<double> vals(6);
            for (double& v : vals) v = rng.normal() * 3.0;
            reports.push_back(make_report(i, std::move(vals), 1 + rng.uniform_int(50)));
            normalized[i] = rng.uniform01();
        }
        std::set<int> honest;
        for (int i = 0; i < n; ++i)
            if (rng.uniform01() < 0.7) honest.insert(i);
        if (honest.empty()) honest.insert(int(rng.uniform_int(n)));

        const bool single = trial % 2 == 1;
        const auto [out, w] = reweighted_aggregate(reports, honest_set(honest),
                                                   scores_of(normalized), single);
        for (std::size_t k = 0; k < out.values.size(); ++k) {
            double lo = 1e300, hi = -1e300;
            for (int id : honest) {
                for (const ClientReport& r : reports)
                    if (r.client_id == id) {
                        lo = std::min(lo, r.params.values[k]);
                        hi = std::max(hi, r.params.values[k]);
                    }
            }
            CHECK(out.values[k] >= lo - 1e-12);
            CHECK(out.values[k] <= hi + 1e-12);
        }
    }
}

TEST_CASE("malicious parameters never influence the aggregate") {
    Rng rng(555);
    std::vector<ClientReport> reports;
    std::map<int, double> normalized;
    for (int i = 0; i < 6; ++i) {
        std::vector<double> vals(5);
        for (double& v : vals) v = rng.normal();
        reports.push_back(make_report(i, std::move(vals), 1 + rng.uniform_int(30)));
        normalized[i] = rng.uniform01();
    }
    DetectionOutcome outcome;
    outcome.honest = {0, 2, 4};
    outcome.malicious = {1, 3, 5};

    const ScoreSet scores = scores_of(normalized);
    const ParamVector base = reweighted_aggregate(reports, outcome, scores).first;
    const ParamVector base_mean = honest_mean(reports, outcome);

    for (int mal : outcome.malicious)
        for (double& v : reports[mal].params.values) v = v * -1e12 + 3.14;

    const ParamVector after = reweighted_aggregate(reports, outcome, scores).first;
    const ParamVector after_mean = honest_mean(reports, outcome);
    CHECK(after.values == base.values);  // bit-identical
    CHECK(after_mean.values == base_mean.values);
}

TEST_CASE("honest mean averages exactly the honest subset") {
    const std::vector<ClientReport> reports{make_report(0, {0.0, 8.0}, 99),
                                            make_report(1, {50.0, 50.0}, 1),
                                            make_report(2, {4.0, 0.0}, 3)};
    const ParamVector out = honest_mean(reports, honest_set({0, 2}));
    CHECK(out.values[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(out.values[1] == doctest::Approx(4.0).epsilon(1e-15));
    CHECK_THROWS_AS(honest_mean(reports, honest_set({})), std::invalid_argument);
}

TEST_CASE("score scale invariance holds, independent perturbation breaks it") {
    Rng rng(31);
    std::vector<ClientReport> reports;
    std::map<int, double> normalized;
    for (int i = 0; i < 5; ++i) {
        std::vector<double> vals(4);
        for (double& v : vals) v = rng.normal() * 2.0;
        reports.push_back(make_report(i, std::move(vals), 1 + rng.uniform_int(20)));
        normalized[i] = 0.1 + 0.9 * rng.uniform01();
    }
    const DetectionOutcome outcome = honest_set({0, 1, 2, 3, 4});
    const ScoreSet scores = scores_of(normalized);

    CHECK(scale_invariance_check(reports, outcome, scores));        // default 7.3
    CHECK(scale_invariance_check(reports, outcome, scores, 1.0));   // identity
    CHECK_THROWS_AS(scale_invariance_check(reports, outcome, scores, 0.0),
                    std::invalid_argument);

    // Scaling a single score is not a common rescaling and must move the
    // aggregate for a generic instance.
    const ParamVector base = reweighted_aggregate(reports, outcome, scores).first;
    ScoreSet bumped = scores;
    bumped.normalized[2] *= 3.0;
    const ParamVector moved = reweighted_aggregate(reports, outcome, bumped).first;
    double max_diff = 0.0;
    for (std::size_t k = 0; k < base.values.size(); ++k)
        max_diff = std::max(max_diff, std::abs(base.values[k] - moved.values[k]));
    CHECK(max_diff > 1e-6);
}
