#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsentinel/aggregation.hpp"
#include "fedsentinel/attacks.hpp"
#include "fedsentinel/confidence.hpp"
#include "fedsentinel/data.hpp"
#include "fedsentinel/detection.hpp"
#include "fedsentinel/nn.hpp"

namespace fedsentinel {

enum class Defense { fedavg, trimmean, confidence };

struct SimulationConfig {
    int n_clients = 50;
    double malicious_fraction = 0.0;
    int rounds = 200;
    int eval_every = 1;
    std::uint64_t seed = 42;

    Defense defense = Defense::fedavg;
    AttackConfig attack;
    PartitionConfig partition;    // n_clients and seed are overridden from above
    TrainConfig train;            // seed is derived from the run seed
    ModelSpec model{{784, 512, 10}};
    ConfidenceConfig confidence;  // num_classes is overridden from the model
    DetectionConfig detection;

    double trim_beta = 0.25;               // TrimMean only
    bool reweight = true;                  // false: unweighted honest mean (ablation)
    bool single_length_weighting = false;  // drop the extra length factor in the final average

    std::string data_spec = "synthetic:5000,784,10";
    std::size_t subsample_train = 0;  // 0 = use everything
    std::size_t subsample_test = 0;
    int threads = 1;
    bool dump_weights = false;

    void validate() const;
    // Copies the run-level fields into the nested configs (partition size and
    // seeds, confidence class count) so every consumer sees one truth.
    SimulationConfig resolved() const;

    bool operator==(const SimulationConfig&) const = default;
};

struct ClientTrace {
    int client_id = 0;
    double sigma_raw = 0.0;
    double sigma_norm = 0.0;
    bool flagged = false;
};

struct RoundMetrics {
    int round = 0;  // 1-based
    double accuracy = 0.0;
    double tpr = 0.0;          // 0/0 sentinel for defenses without detection
    double fpr = 0.0;
    int honest_count = 0;
    bool degenerate = false;   // separation guard fired this round
    double mu_lower = 0.0;
    double mu_upper = 0.0;
    std::vector<ClientTrace> clients;
    AggregationWeights weights;  // populated for re-weighted rounds when dump_weights
};

std::set<int> select_malicious(int n, double fraction, std::uint64_t seed);

// Runs the full round loop on explicit datasets. Deterministic for a fixed
// config; thread count never changes results.
std::vector<RoundMetrics> run(const SimulationConfig& config, const Dataset& train_set,
                              const Dataset& test_set);

// Convenience overload: loads datasets from config.data_spec first.
std::vector<RoundMetrics> run(const SimulationConfig& config);

// Writes metrics.csv, scores.csv, run.json (and weights.csv when the config
// asks for it) into out_dir, creating it if needed.
void write_report(const std::vector<RoundMetrics>& metrics, const SimulationConfig& config,
                  const std::string& out_dir);

void to_json(nlohmann::json& j, const SimulationConfig& cfg);
void from_json(const nlohmann::json& j, SimulationConfig& cfg);

std::string to_string(Defense d);
std::string to_string(AttackKind k);
std::string to_string(Knowledge k);
Defense defense_from_string(const std::string& s);
AttackKind attack_kind_from_string(const std::string& s);
Knowledge knowledge_from_string(const std::string& s);

}  // namespace fedsentinel
