#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "fedsentinel/confidence.hpp"
#include "fedsentinel/rng.hpp"

using namespace fedsentinel;

namespace {
constexpr double kE = 2.718281828459045;
constexpr double kInvE = 0.36787944117144233;
// Omega constant: W(1). Newton iteration on w*e^w - 1 converges to this to
// full double precision; frozen here as the independent reference.
constexpr double kOmega = 0.5671432904097838;
}  // namespace

TEST_CASE("lambert_w0 special values") {
    CHECK(lambert_w0(0.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(lambert_w0(kE) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(lambert_w0(1.0) == doctest::Approx(kOmega).epsilon(1e-14));
    CHECK(lambert_w0(-kInvE) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(lambert_w0(-kInvE) >= -1.0 - 1e-12);
}

TEST_CASE("lambert_w0l inverts w*exp(w) across the domain") {
    // Log-spaced positive points up to 1e6 plus the negative branch segment.
    // The 1e-10 absolute round-trip bound is a property of the long double
    // core; rounding the result to double costs up to ~1e-9 at x ~ 1e6, so
    // the double wrapper is held to a scale-aware bound below.
    for (int i = 0; i <= 600; ++i) {
        const long double x = std::pow(10.0L, -6.0L + 12.0L * i / 600.0L);
        const long double w = lambert_w0l(x);
        CHECK(std::abs(w * std::exp(w) - x) <= 1e-10L);
    }
    for (int i = 0; i <= 200; ++i) {
        const long double x = -kInvE + (long double)(kInvE)*i / 200.0L;
        const long double w = lambert_w0l(x);
        CHECK(w >= -1.0L - 1e-12L);
        CHECK(std::abs(w * std::exp(w) - x) <= 1e-10L);
    }
}

TEST_CASE("double wrapper tracks the core to rounding accuracy") {
    for (int i = 0; i <= 600; ++i) {
        const double x = std::pow(10.0, -6.0 + 12.0 * i / 600.0);
        const double w = lambert_w0(x);
        CHECK(std::abs(w * std::exp(w) - x) <= 5e-15 * (1.0 + x));
    }
    for (int i = 0; i <= 200; ++i) {
        const double x = -kInvE + (kInvE)*i / 200.0;
        const double w = lambert_w0(x);
        CHECK(w >= -1.0 - 1e-12);
        CHECK(std::abs(w * std::exp(w) - x) <= 5e-15);
    }
}

TEST_CASE("lambert_w0 rejects arguments below the branch point") {
    CHECK_THROWS_AS(lambert_w0(-0.5), std::domain_error);
    CHECK_THROWS_AS(lambert_w0(std::nan("")), std::domain_error);
}

TEST_CASE("sample_confidence closed form") {
    ConfidenceConfig cfg;
    cfg.lambda = 1.0;
    cfg.num_classes = 10;
    const double logC = std::log(10.0);

    // Loss at the class-count baseline: argument 0, sigma = 1.
    CHECK(sample_confidence(logC, cfg) == doctest::Approx(1.0).epsilon(1e-12));
    // Small loss clips at -2/e: sigma = exp(-W(-1/e)) = e.
    CHECK(sample_confidence(0.0, cfg) == doctest::Approx(kE).epsilon(1e-12));
    // loss = log C + 2*lambda gives W(1); exp(-W(1)) equals W(1) itself.
    CHECK(sample_confidence(logC + 2.0, cfg) == doctest::Approx(kOmega).epsilon(1e-12));

    ConfidenceConfig quarter = cfg;
    quarter.lambda = 0.25;
    CHECK(sample_confidence(logC, quarter) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sample_confidence(logC + 0.5, quarter) == doctest::Approx(kOmega).epsilon(1e-12));
    CHECK(sample_confidence(0.0, quarter) == doctest::Approx(kE).epsilon(1e-12));
}

TEST_CASE("sample_confidence is monotone non-increasing and bounded") {
    for (double lambda : {0.25, 1.0}) {
        ConfidenceConfig cfg;
        cfg.lambda = lambda;
        cfg.num_classes = 10;
        double prev = kE + 1e-9;
        for (int i = 0; i <= 10000; ++i) {
            const double loss = 20.0 * i / 10000.0;
            const double s = sample_confidence(loss, cfg);
            CHECK(s > 0.0);
            CHECK(s <= kE + 1e-12);
            CHECK(s <= prev + 1e-12);
            prev = s;
        }
    }
}

TEST_CASE("client_confidence is the mean of sample confidences") {
    ConfidenceConfig cfg;
    cfg.num_classes = 10;
    Rng rng(4);
    std::vector<double> losses(1000);
    for (double& l : losses) l = rng.uniform(0.0, 8.0);
    double expected = 0.0;
    for (double l : losses) expected += sample_confidence(l, cfg);
    expected /= double(losses.size());
    CHECK(client_confidence(losses, cfg) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(client_confidence({std::log(10.0), std::log(10.0)}, cfg) == doctest::Approx(1.0));
    CHECK_THROWS_AS(client_confidence({}, cfg), std::invalid_argument);
}

TEST_CASE("normalize_scores min-max scaling") {
    const ScoreSet s = normalize_scores({{1, 1.0}, {2, 2.0}, {3, 3.0}});
    CHECK(s.normalized.at(1) == doctest::Approx(0.0));
    CHECK(s.normalized.at(2) == doctest::Approx(0.5));
    CHECK(s.normalized.at(3) == doctest::Approx(1.0));
    CHECK(s.raw.at(2) == 2.0);

    const ScoreSet flat = normalize_scores({{1, 0.7}, {2, 0.7}, {3, 0.7}});
    for (const auto& [id, v] : flat.normalized) CHECK(v == 1.0);

    CHECK_THROWS_AS(normalize_scores({}), std::invalid_argument);
}

TEST_CASE("normalization preserves score order") {
    Rng rng(8);
    std::map<int, double> raw;
    for (int i = 0; i < 40; ++i) raw[i] = rng.uniform(0.2, 2.5);
    const ScoreSet s = normalize_scores(raw);
    for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 40; ++j)
            if (raw[i] < raw[j]) CHECK(s.normalized.at(i) < s.normalized.at(j));
}

TEST_CASE("config validation") {
    ConfidenceConfig bad;
    bad.lambda = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.lambda = 1.0;
    bad.num_classes = 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
