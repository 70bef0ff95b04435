#include "fedsentinel/detection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedsentinel {

KMeansResult kmeans2_1d(const std::vector<double>& values, int max_iters) {
    if (values.size() < 2) throw std::invalid_argument("kmeans2_1d: need at least two values");
    if (max_iters < 1) throw std::invalid_argument("kmeans2_1d: max_iters must be positive");

    KMeansResult res;
    res.mu_lower = *std::min_element(values.begin(), values.end());
    res.mu_upper = *std::max_element(values.begin(), values.end());
    res.assignment.assign(values.size(), 0);
    if (res.mu_lower == res.mu_upper) {
        res.degenerate = true;
        res.assignment.assign(values.size(), 1);
        return res;
    }

    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = iter == 0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double d_lo = std::abs(values[i] - res.mu_lower);
            const double d_hi = std::abs(values[i] - res.mu_upper);
            const int a = d_hi <= d_lo ? 1 : 0;  // ties join the upper cluster
            if (a != res.assignment[i]) changed = true;
            res.assignment[i] = a;
        }
        res.iterations = iter + 1;
        if (!changed) break;

        double sum[2] = {0.0, 0.0};
        std::size_t count[2] = {0, 0};
        for (std::size_t i = 0; i < values.size(); ++i) {
            sum[res.assignment[i]] += values[i];
            ++count[res.assignment[i]];
        }
        // An emptied cluster keeps its previous centroid.
        if (count[0] > 0) res.mu_lower = sum[0] / double(count[0]);
        if (count[1] > 0) res.mu_upper = sum[1] / double(count[1]);
    }
    if (res.mu_lower > res.mu_upper) std::swap(res.mu_lower, res.mu_upper);
    return res;
}

void DetectionConfig::validate() const {
    if (epsilon_gap < 0.0) throw std::invalid_argument("detection config: epsilon_gap must be nonnegative");
}

DetectionOutcome classify_with_centroids(const ScoreSet& scores, double mu_lower,
                                         double mu_upper) {
    if (scores.raw.empty() || scores.normalized.size() != scores.raw.size())
        throw std::invalid_argument("classify_with_centroids: inconsistent score set");
    if (!(mu_lower <= mu_upper))
        throw std::invalid_argument("classify_with_centroids: centroids out of order");

    DetectionOutcome res;
    res.mu_lower = mu_lower;
    res.mu_upper = mu_upper;
    if (mu_lower == mu_upper) {
        res.degenerate = true;
        for (const auto& [id, s] : scores.normalized) res.honest.insert(id);
        return res;
    }
    for (const auto& [id, s] : scores.normalized) {
        const double d_lo = std::abs(s - mu_lower);
        const double d_hi = std::abs(s - mu_upper);
        if (d_hi < d_lo)
            res.honest.insert(id);
        else
            res.malicious.insert(id);  // ties are suspicious
    }
    return res;
}

DetectionOutcome classify_clients(const ScoreSet& scores, const DetectionConfig& cfg) {
    cfg.validate();
    if (scores.raw.empty() || scores.normalized.size() != scores.raw.size())
        throw std::invalid_argument("classify_clients: inconsistent score set");

    double raw_lo = scores.raw.begin()->second, raw_hi = raw_lo;
    for (const auto& [id, s] : scores.raw) {
        raw_lo = std::min(raw_lo, s);
        raw_hi = std::max(raw_hi, s);
    }
    // Min-max normalization stretches any nonzero spread to [0, 1], so a
    // "too close to separate" test must look at the raw spread: if all raw
    // scores sit within epsilon_gap of each other, treat everyone as honest.
    if (raw_hi - raw_lo < cfg.epsilon_gap || scores.raw.size() < 2) {
        DetectionOutcome res;
        res.degenerate = true;
        for (const auto& [id, s] : scores.raw) res.honest.insert(id);
        return res;
    }

    std::vector<double> vals;
    vals.reserve(scores.normalized.size());
    for (const auto& [id, s] : scores.normalized) vals.push_back(s);

    const KMeansResult km = kmeans2_1d(vals);
    return classify_with_centroids(scores, km.mu_lower, km.mu_upper);
}

DetectionMetrics detection_metrics(const std::set<int>& flagged,
                                   const std::set<int>& truth_malicious,
                                   const std::set<int>& all_clients) {
    DetectionMetrics m;
    std::size_t tp = 0, fp = 0, honest_total = 0;
    for (int id : all_clients) {
        const bool is_mal = truth_malicious.count(id) > 0;
        const bool is_flagged = flagged.count(id) > 0;
        if (is_mal) {
            if (is_flagged) ++tp;
        } else {
            ++honest_total;
            if (is_flagged) ++fp;
        }
    }
    if (!truth_malicious.empty()) m.tpr = double(tp) / double(truth_malicious.size());
    if (honest_total > 0) m.fpr = double(fp) / double(honest_total);
    return m;
}

}  // namespace fedsentinel
