#include "fedsentinel/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fedsentinel {

// Halley iteration on f(w) = w*exp(w) - x in long double. Initial guess is
// log1p(x) for x >= -0.25 and the branch-point series in p = sqrt(2(e x + 1))
// below that; both put the iterate in the cubic-convergence basin, so a
// handful of steps reaches extended precision everywhere on [-1/e, 1e308].
long double lambert_w0l(long double x) {
    constexpr long double inv_e = 0.36787944117144232159552377016146L;
    constexpr long double e_ld = 2.71828182845904523536028747135266L;
    // Doubles rounded from -1/e land a few 1e-17 below the true branch point;
    // treat that sliver as the branch point itself rather than a domain error.
    constexpr long double slack = 1e-12L;
    if (std::isnan(x)) throw std::domain_error("lambert_w0: argument is NaN");
    if (x <= -inv_e) {
        if (x < -inv_e - slack) throw std::domain_error("lambert_w0: argument below -1/e");
        return -1.0L;
    }
    if (x == 0.0L) return 0.0L;

    long double w;
    if (x < -0.25L) {
        // w = -1 + p - p^2/3 + (11/72) p^3 + O(p^4) around the branch point.
        const long double p = std::sqrt(2.0L * (e_ld * x + 1.0L));
        w = -1.0L + p * (1.0L + p * (-1.0L / 3.0L + p * (11.0L / 72.0L)));
        // Within p <= 1e-2 the series residual is already ~3e-12 while f(w)
        // is cancellation noise and f'(w) ~ p; Halley would only wander.
        if (p <= 1e-2L) return w;
    } else {
        w = std::log1p(x);
    }

    for (int iter = 0; iter < 60; ++iter) {
        const long double ew = std::exp(w);
        const long double f = w * ew - x;
        if (f == 0.0L) break;
        const long double wp1 = w + 1.0L;
        const long double denom = ew * wp1 - (w + 2.0L) * f / (2.0L * wp1);
        const long double step = f / denom;
        w -= step;
        if (std::abs(step) <= std::numeric_limits<long double>::epsilon() * (std::abs(w) + 1.0L)) break;
    }
    return w;
}

double lambert_w0(double x) {
    return double(lambert_w0l((long double)x));
}

void ConfidenceConfig::validate() const {
    if (!(lambda > 0.0)) throw std::invalid_argument("confidence config: lambda must be positive");
    if (num_classes < 2) throw std::invalid_argument("confidence config: num_classes must be >= 2");
}

double sample_confidence(double loss, const ConfidenceConfig& cfg) {
    cfg.validate();
    if (!std::isfinite(loss)) throw std::invalid_argument("sample_confidence: loss must be finite");
    const double tau = std::log(double(cfg.num_classes));
    const double beta = (loss - tau) / cfg.lambda;
    const double arg = std::max(-2.0 / std::exp(1.0), beta) / 2.0;
    return std::exp(-lambert_w0(arg));
}

double client_confidence(const std::vector<double>& losses, const ConfidenceConfig& cfg) {
    cfg.validate();
    if (losses.empty()) throw std::invalid_argument("client_confidence: no losses");
    double sum = 0.0;
    for (double loss : losses) sum += sample_confidence(loss, cfg);
    return sum / double(losses.size());
}

ScoreSet normalize_scores(const std::map<int, double>& raw) {
    if (raw.empty()) throw std::invalid_argument("normalize_scores: no scores");
    ScoreSet out;
    out.raw = raw;
    double lo = raw.begin()->second, hi = raw.begin()->second;
    for (const auto& [id, s] : raw) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    const double span = hi - lo;
    for (const auto& [id, s] : raw)
        out.normalized[id] = span > 0.0 ? (s - lo) / span : 1.0;
    return out;
}

}  // namespace fedsentinel
