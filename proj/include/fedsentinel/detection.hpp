#pragma once

#include <set>
#include <vector>

#include "fedsentinel/confidence.hpp"

namespace fedsentinel {

struct KMeansResult {
    double mu_lower = 0.0;
    double mu_upper = 0.0;
    std::vector<int> assignment;  // per input value: 0 = lower cluster, 1 = upper
    int iterations = 0;
    bool degenerate = false;  // all values equal: both centroids coincide
};

// Deterministic two-cluster 1-D Lloyd's algorithm. Centroids start at the
// min and max of the values; ties in assignment go to the upper cluster.
// Requires at least two values.
KMeansResult kmeans2_1d(const std::vector<double>& values, int max_iters = 100);

struct DetectionConfig {
    double epsilon_gap = 0.12;

    void validate() const;

    bool operator==(const DetectionConfig&) const = default;
};

struct DetectionOutcome {
    std::set<int> honest;
    std::set<int> malicious;
    double mu_lower = 0.0;   // centroids in normalized score space
    double mu_upper = 0.0;
    bool degenerate = false;  // separation guard fired: everyone kept as honest
};

// Pure classification rule: a client is honest iff its normalized score is
// strictly nearer mu_upper; equidistant scores count as malicious. When the
// centroids coincide there is nothing to separate and everyone is kept
// (degenerate = true).
DetectionOutcome classify_with_centroids(const ScoreSet& scores, double mu_lower,
                                         double mu_upper);

// Full detection step: clusters the normalized scores with kmeans2_1d and
// applies classify_with_centroids. When the raw scores span less than
// epsilon_gap there is no meaningful separation and all clients are kept as
// honest (degenerate = true).
DetectionOutcome classify_clients(const ScoreSet& scores, const DetectionConfig& cfg);

struct DetectionMetrics {
    double tpr = 1.0;  // flagged malicious / actual malicious (1.0 when none exist)
    double fpr = 0.0;  // flagged honest / actual honest (0.0 when none exist)
};

DetectionMetrics detection_metrics(const std::set<int>& flagged,
                                   const std::set<int>& truth_malicious,
                                   const std::set<int>& all_clients);

}  // namespace fedsentinel
