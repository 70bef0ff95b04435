#pragma once

#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "fedsentinel/confidence.hpp"
#include "fedsentinel/detection.hpp"
#include "fedsentinel/nn.hpp"

namespace fedsentinel {

// One client's round submission as the coordinator sees it.
struct ClientReport {
    int client_id = 0;
    ParamVector params;
    double sigma_raw = 0.0;        // self-measured mean confidence
    std::size_t data_length = 1;   // local training set size

    void validate() const;
};

// Decomposition of the re-weighted aggregation coefficients over the honest
// set: w_orig is the data-share weight, r_norm the confidence share, and
// w_final their product (before the final length renormalization).
struct AggregationWeights {
    std::map<int, double> w_orig;
    std::map<int, double> r_norm;
    std::map<int, double> w_final;
};

// Plain federated averaging: theta = sum(l_i * theta_i) / sum(l_i).
ParamVector fedavg(const std::vector<ClientReport>& reports);

// Coordinate-wise trimmed mean: drops the floor(beta*n) largest and smallest
// values per coordinate and averages the rest unweighted. Requires
// 2*floor(beta*n) < n.
ParamVector trimmed_mean(const std::vector<ClientReport>& reports, double beta);

// Confidence re-weighted aggregation over the honest set:
//   w_orig,i  = l_i / sum_H l_j
//   r_norm,i  = s_i / sum_H s_j    (normalized confidence scores; uniform
//                                   when every honest s_i is zero)
//   w_final,i = r_norm,i * w_orig,i
//   theta     = sum_H w_final,i * l_i * theta_i / sum_H w_final,i * l_i
// The trailing l_i factor makes the effective weight proportional to
// s_i * l_i^2; pass single_length_weighting = true to drop it and weight by
// w_final alone. Honest set must be nonempty.
std::pair<ParamVector, AggregationWeights> reweighted_aggregate(
    const std::vector<ClientReport>& reports, const DetectionOutcome& outcome,
    const ScoreSet& scores, bool single_length_weighting = false);

// Ablation variant: unweighted mean of the honest clients' parameters.
ParamVector honest_mean(const std::vector<ClientReport>& reports, const DetectionOutcome& outcome);

// Property probe: scaling every honest client's score by a common positive
// constant must leave the re-weighted aggregate unchanged (within 1e-10),
// since r_norm is a ratio.
bool scale_invariance_check(const std::vector<ClientReport>& reports,
                            const DetectionOutcome& outcome, const ScoreSet& scores,
                            double scale = 7.3);

}  // namespace fedsentinel
