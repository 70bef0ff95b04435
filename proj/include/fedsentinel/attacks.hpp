#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "fedsentinel/nn.hpp"

namespace fedsentinel {

enum class AttackKind { none, label_shuffle, lie, min_max, min_sum };
enum class Knowledge { full, partial };

struct AttackConfig {
    AttackKind kind = AttackKind::none;
    Knowledge knowledge = Knowledge::full;
    double z = 1.5;             // LIE deviation coefficient
    double gamma_tol = 1e-5;    // binary-search tolerance for MM/MS
    std::uint64_t seed = 0;

    void validate() const;

    bool operator==(const AttackConfig&) const = default;
};

// What the adversary sees when crafting the round's malicious vector: under
// full knowledge the honest clients' updates, under partial knowledge the
// malicious cohort's own benignly trained updates.
struct AttackContext {
    std::vector<const ParamVector*> visible_updates;
    std::set<int> malicious_ids;
};

// "A little is enough": coordinate-wise mean + z * std of the visible
// updates (population std; zero when only one update is visible).
ParamVector lie_attack(const AttackContext& ctx, const AttackConfig& cfg);

// Min-Max: mu + gamma * p with p the fixed perturbation direction
// (-mu/|mu|, falling back to -1/sqrt(d) when mu = 0) and gamma the largest
// value, located by binary search, such that the crafted vector stays within
// the maximum pairwise distance among visible updates.
ParamVector min_max_attack(const AttackContext& ctx, const AttackConfig& cfg);

// Min-Sum: as Min-Max but bounding the sum of squared distances to the
// visible updates by the worst such sum among the visible updates themselves.
ParamVector min_sum_attack(const AttackContext& ctx, const AttackConfig& cfg);

// Replaces malicious clients' updates with the crafted attack vector (all
// malicious clients submit the identical vector). kind none / label_shuffle
// leave updates untouched; label shuffling happens at the data level.
std::map<int, ParamVector> apply_attack(const std::map<int, ParamVector>& round_updates,
                                        const std::set<int>& truth_malicious,
                                        const AttackConfig& cfg);

}  // namespace fedsentinel
