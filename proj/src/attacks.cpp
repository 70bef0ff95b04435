#include "fedsentinel/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace fedsentinel {

namespace {

void check_context(const AttackContext& ctx) {
    if (ctx.visible_updates.empty())
        throw std::invalid_argument("attack: visible update set is empty");
    const std::size_t d = ctx.visible_updates.front()->values.size();
    for (const ParamVector* u : ctx.visible_updates)
        if (u->values.size() != d)
            throw std::invalid_argument("attack: mismatched update lengths");
}

std::vector<double> mean_of(const std::vector<const ParamVector*>& updates) {
    const std::size_t d = updates.front()->values.size();
    std::vector<double> mu(d, 0.0);
    for (const ParamVector* u : updates)
        for (std::size_t k = 0; k < d; ++k) mu[k] += u->values[k];
    for (double& v : mu) v /= double(updates.size());
    return mu;
}

// Unit perturbation direction: -mu/|mu|, or -1/sqrt(d) when mu is zero.
std::vector<double> perturbation_direction(const std::vector<double>& mu) {
    double norm = 0.0;
    for (double v : mu) norm += v * v;
    norm = std::sqrt(norm);
    std::vector<double> p(mu.size());
    if (norm > 0.0) {
        for (std::size_t k = 0; k < mu.size(); ++k) p[k] = -mu[k] / norm;
    } else {
        const double v = -1.0 / std::sqrt(double(mu.size()));
        std::fill(p.begin(), p.end(), v);
    }
    return p;
}

struct DistanceStats {
    std::vector<double> a;  // a_i = |mu - u_i|^2
    std::vector<double> b;  // b_i = p . (mu - u_i)
    double max_pair_sq = 0.0;      // max_{i,j} |u_i - u_j|^2
    double max_sum_pair_sq = 0.0;  // max_i sum_j |u_i - u_j|^2
};

// The crafted vector is v = mu + gamma*p with |p| = 1, so
// |v - u_i|^2 = a_i + 2*gamma*b_i + gamma^2; precomputing a and b makes each
// feasibility probe O(m) instead of O(m*d).
DistanceStats distance_stats(const std::vector<const ParamVector*>& updates,
                             const std::vector<double>& mu, const std::vector<double>& p) {
    const std::size_t m = updates.size();
    const std::size_t d = mu.size();
    DistanceStats st;
    st.a.resize(m);
    st.b.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* u = updates[i]->values.data();
        double a = 0.0, b = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = mu[k] - u[k];
            a += diff * diff;
            b += p[k] * diff;
        }
        st.a[i] = a;
        st.b[i] = b;
    }

    std::vector<double> sum_sq(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* ui = updates[i]->values.data();
        for (std::size_t j = i + 1; j < m; ++j) {
            const double* uj = updates[j]->values.data();
            double dist = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = ui[k] - uj[k];
                dist += diff * diff;
            }
            st.max_pair_sq = std::max(st.max_pair_sq, dist);
            sum_sq[i] += dist;
            sum_sq[j] += dist;
        }
    }
    st.max_sum_pair_sq = *std::max_element(sum_sq.begin(), sum_sq.end());
    return st;
}

// Largest feasible gamma: doubling phase to bracket, then bisection. The
// feasible predicate must hold at gamma = 0.
double search_gamma(const std::function<bool(double)>& feasible, double gamma_tol) {
    if (!feasible(0.0)) return 0.0;
    double hi = 1.0;
    int doublings = 0;
    while (feasible(hi) && doublings < 200) {
        hi *= 2.0;
        ++doublings;
    }
    if (doublings >= 200) return hi;  // unreachable: the quadratic term always binds
    double lo = hi / 2.0;
    if (hi == 1.0) lo = 0.0;
    for (int iter = 0; iter < 60 && hi - lo > gamma_tol; ++iter) {
        const double mid = 0.5 * (lo + hi);
        (feasible(mid) ? lo : hi) = mid;
    }
    return lo;
}

ParamVector crafted(const ParamVector& shape, const std::vector<double>& mu,
                    const std::vector<double>& p, double gamma) {
    ParamVector out;
    out.spec = shape.spec;
    out.values.resize(mu.size());
    for (std::size_t k = 0; k < mu.size(); ++k) out.values[k] = mu[k] + gamma * p[k];
    return out;
}

ParamVector craft_attack(const AttackContext& ctx, const AttackConfig& cfg) {
    switch (cfg.kind) {
        case AttackKind::lie: return lie_attack(ctx, cfg);
        case AttackKind::min_max: return min_max_attack(ctx, cfg);
        case AttackKind::min_sum: return min_sum_attack(ctx, cfg);
        default: throw std::logic_error("craft_attack: not a model-poisoning attack");
    }
}

}  // namespace

void AttackConfig::validate() const {
    if (!std::isfinite(z)) throw std::invalid_argument("attack config: z must be finite");
    if (!(gamma_tol > 0.0)) throw std::invalid_argument("attack config: gamma_tol must be positive");
}

ParamVector lie_attack(const AttackContext& ctx, const AttackConfig& cfg) {
    cfg.validate();
    check_context(ctx);
    const std::size_t m = ctx.visible_updates.size();
    const std::size_t d = ctx.visible_updates.front()->values.size();
    const std::vector<double> mu = mean_of(ctx.visible_updates);

    ParamVector out;
    out.spec = ctx.visible_updates.front()->spec;
    out.values = mu;
    if (m < 2) return out;  // std of a single point is zero

    for (std::size_t k = 0; k < d; ++k) {
        double var = 0.0;
        for (const ParamVector* u : ctx.visible_updates) {
            const double diff = u->values[k] - mu[k];
            var += diff * diff;
        }
        out.values[k] += cfg.z * std::sqrt(var / double(m));
    }
    return out;
}

ParamVector min_max_attack(const AttackContext& ctx, const AttackConfig& cfg) {
    cfg.validate();
    check_context(ctx);
    if (ctx.visible_updates.size() < 2)
        throw std::invalid_argument("min_max_attack: need at least two visible updates");

    const std::vector<double> mu = mean_of(ctx.visible_updates);
    const std::vector<double> p = perturbation_direction(mu);
    const DistanceStats st = distance_stats(ctx.visible_updates, mu, p);

    const auto feasible = [&](double g) {
        double worst = 0.0;
        for (std::size_t i = 0; i < st.a.size(); ++i)
            worst = std::max(worst, st.a[i] + 2.0 * g * st.b[i] + g * g);
        return worst <= st.max_pair_sq;
    };
    const double gamma = search_gamma(feasible, cfg.gamma_tol);
    return crafted(*ctx.visible_updates.front(), mu, p, gamma);
}

ParamVector min_sum_attack(const AttackContext& ctx, const AttackConfig& cfg) {
    cfg.validate();
    check_context(ctx);
    if (ctx.visible_updates.size() < 2)
        throw std::invalid_argument("min_sum_attack: need at least two visible updates");

    const std::vector<double> mu = mean_of(ctx.visible_updates);
    const std::vector<double> p = perturbation_direction(mu);
    const DistanceStats st = distance_stats(ctx.visible_updates, mu, p);

    const auto feasible = [&](double g) {
        double total = 0.0;
        for (std::size_t i = 0; i < st.a.size(); ++i)
            total += st.a[i] + 2.0 * g * st.b[i] + g * g;
        return total <= st.max_sum_pair_sq;
    };
    const double gamma = search_gamma(feasible, cfg.gamma_tol);
    return crafted(*ctx.visible_updates.front(), mu, p, gamma);
}

std::map<int, ParamVector> apply_attack(const std::map<int, ParamVector>& round_updates,
                                        const std::set<int>& truth_malicious,
                                        const AttackConfig& cfg) {
    cfg.validate();
    for (int id : truth_malicious)
        if (round_updates.find(id) == round_updates.end())
            throw std::invalid_argument("apply_attack: malicious id not among round updates");

    std::map<int, ParamVector> out = round_updates;
    if (cfg.kind == AttackKind::none || cfg.kind == AttackKind::label_shuffle ||
        truth_malicious.empty())
        return out;

    AttackContext ctx;
    ctx.malicious_ids = truth_malicious;
    for (const auto& [id, params] : round_updates) {
        const bool is_malicious = truth_malicious.count(id) > 0;
        if (cfg.knowledge == Knowledge::full ? !is_malicious : is_malicious)
            ctx.visible_updates.push_back(&params);
    }
    if (ctx.visible_updates.empty())
        throw std::invalid_argument("apply_attack: adversary has no visible updates");

    const ParamVector attack_vector = craft_attack(ctx, cfg);
    for (int id : truth_malicious) out[id] = attack_vector;
    return out;
}

}  // namespace fedsentinel
