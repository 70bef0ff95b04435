#include "fedsentinel/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedsentinel {

namespace {

void check_reports(const std::vector<ClientReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("aggregation: no reports");
    for (const ClientReport& r : reports) r.validate();
    for (const ClientReport& r : reports)
        if (r.params.values.size() != reports.front().params.values.size())
            throw std::invalid_argument("aggregation: mismatched parameter lengths");
}

const ClientReport& report_for(const std::vector<ClientReport>& reports, int id) {
    for (const ClientReport& r : reports)
        if (r.client_id == id) return r;
    throw std::invalid_argument("aggregation: honest set references unknown client id");
}

// Accumulates sum of coeff_i * theta_i over (report, coefficient) pairs.
ParamVector weighted_sum(const std::vector<std::pair<const ClientReport*, double>>& terms) {
    ParamVector out;
    out.spec = terms.front().first->params.spec;
    out.values.assign(terms.front().first->params.values.size(), 0.0);
    for (const auto& [report, coeff] : terms) {
        const std::vector<double>& v = report->params.values;
        for (std::size_t k = 0; k < v.size(); ++k) out.values[k] += coeff * v[k];
    }
    return out;
}

}  // namespace

void ClientReport::validate() const {
    params.validate();
    if (data_length < 1) throw std::invalid_argument("client report: data_length must be >= 1");
    if (!std::isfinite(sigma_raw)) throw std::invalid_argument("client report: sigma_raw must be finite");
}

ParamVector fedavg(const std::vector<ClientReport>& reports) {
    check_reports(reports);
    double total = 0.0;
    for (const ClientReport& r : reports) total += double(r.data_length);
    std::vector<std::pair<const ClientReport*, double>> terms;
    terms.reserve(reports.size());
    for (const ClientReport& r : reports) terms.emplace_back(&r, double(r.data_length) / total);
    return weighted_sum(terms);
}

ParamVector trimmed_mean(const std::vector<ClientReport>& reports, double beta) {
    check_reports(reports);
    if (beta < 0.0) throw std::invalid_argument("trimmed_mean: beta must be nonnegative");
    const std::size_t n = reports.size();
    const std::size_t trim = std::size_t(std::floor(beta * double(n)));
    if (2 * trim >= n) throw std::invalid_argument("trimmed_mean: beta trims away all clients");

    ParamVector out;
    out.spec = reports.front().params.spec;
    out.values.assign(reports.front().params.values.size(), 0.0);
    std::vector<double> column(n);
    const std::size_t kept = n - 2 * trim;
    for (std::size_t k = 0; k < out.values.size(); ++k) {
        for (std::size_t i = 0; i < n; ++i) column[i] = reports[i].params.values[k];
        std::sort(column.begin(), column.end());
        double sum = 0.0;
        for (std::size_t i = trim; i < n - trim; ++i) sum += column[i];
        out.values[k] = sum / double(kept);
    }
    return out;
}

std::pair<ParamVector, AggregationWeights> reweighted_aggregate(
    const std::vector<ClientReport>& reports, const DetectionOutcome& outcome,
    const ScoreSet& scores, bool single_length_weighting) {
    check_reports(reports);
    if (outcome.honest.empty()) throw std::invalid_argument("reweighted_aggregate: honest set is empty");

    AggregationWeights weights;
    double total_len = 0.0, total_score = 0.0;
    for (int id : outcome.honest) {
        const ClientReport& r = report_for(reports, id);
        const auto it = scores.normalized.find(id);
        if (it == scores.normalized.end())
            throw std::invalid_argument("reweighted_aggregate: missing score for honest client");
        total_len += double(r.data_length);
        total_score += it->second;
    }

    const double uniform = 1.0 / double(outcome.honest.size());
    for (int id : outcome.honest) {
        const ClientReport& r = report_for(reports, id);
        weights.w_orig[id] = double(r.data_length) / total_len;
        weights.r_norm[id] = total_score > 0.0 ? scores.normalized.at(id) / total_score : uniform;
        weights.w_final[id] = weights.r_norm[id] * weights.w_orig[id];
    }

    double denom = 0.0;
    for (int id : outcome.honest) {
        const ClientReport& r = report_for(reports, id);
        denom += weights.w_final[id] * (single_length_weighting ? 1.0 : double(r.data_length));
    }
    std::vector<std::pair<const ClientReport*, double>> terms;
    terms.reserve(outcome.honest.size());
    for (int id : outcome.honest) {
        const ClientReport& r = report_for(reports, id);
        const double num = weights.w_final[id] * (single_length_weighting ? 1.0 : double(r.data_length));
        terms.emplace_back(&r, num / denom);
    }
    return {weighted_sum(terms), weights};
}

ParamVector honest_mean(const std::vector<ClientReport>& reports, const DetectionOutcome& outcome) {
    check_reports(reports);
    if (outcome.honest.empty()) throw std::invalid_argument("honest_mean: honest set is empty");
    std::vector<std::pair<const ClientReport*, double>> terms;
    terms.reserve(outcome.honest.size());
    const double coeff = 1.0 / double(outcome.honest.size());
    for (int id : outcome.honest) terms.emplace_back(&report_for(reports, id), coeff);
    return weighted_sum(terms);
}

bool scale_invariance_check(const std::vector<ClientReport>& reports,
                            const DetectionOutcome& outcome, const ScoreSet& scores,
                            double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("scale_invariance_check: scale must be positive");
    const ParamVector base = reweighted_aggregate(reports, outcome, scores).first;
    ScoreSet scaled = scores;
    for (auto& [id, s] : scaled.normalized) s *= scale;
    const ParamVector other = reweighted_aggregate(reports, outcome, scaled).first;
    for (std::size_t k = 0; k < base.values.size(); ++k)
        if (std::abs(base.values[k] - other.values[k]) > 1e-10) return false;
    return true;
}

}  // namespace fedsentinel
