#pragma once

#include <map>
#include <vector>

namespace fedsentinel {

// Principal branch W0 of the Lambert W function, defined for x >= -1/e.
// Halley iteration in long double; the residual w*exp(w) - x stays below
// 1e-10 in absolute terms across [-1/e, 1e6] at this precision. Arguments a
// hair below -1/e (within 1e-12, e.g. the double rounding of -1/e itself)
// clamp to the branch point and return exactly -1; anything further below
// throws std::domain_error.
long double lambert_w0l(long double x);

// Double-precision wrapper around lambert_w0l. Note the rounding of the
// result to double costs up to ~1e-9 of absolute round-trip residual at
// x ~ 1e6; callers needing the 1e-10 bound should use lambert_w0l.
double lambert_w0(double x);

struct ConfidenceConfig {
    double lambda = 1.0;
    int num_classes = 10;

    void validate() const;

    bool operator==(const ConfidenceConfig&) const = default;
};

// Closed-form optimal confidence for one sample with cross-entropy loss
// `loss`: sigma* = exp(-W(max(-2/e, (loss - log C) / lambda) / 2)), in (0, e].
double sample_confidence(double loss, const ConfidenceConfig& cfg);

// Mean sample confidence over a client's per-sample losses.
double client_confidence(const std::vector<double>& losses, const ConfidenceConfig& cfg);

struct ScoreSet {
    std::map<int, double> raw;         // client id -> mean confidence
    std::map<int, double> normalized;  // client id -> min-max normalized score
};

// Min-max normalizes raw scores into [0, 1]. If every raw score is equal the
// normalized scores are all 1.0 (no evidence to separate anyone).
ScoreSet normalize_scores(const std::map<int, double>& raw);

}  // namespace fedsentinel
