#pragma once

#include <cstdint>
#include <vector>

#include "fedsentinel/data.hpp"
#include "fedsentinel/matrix.hpp"

namespace fedsentinel {

/// Fully-connected architecture: ReLU on hidden layers, softmax output.
struct ModelSpec {
    std::vector<int> layer_sizes;  // e.g. {784, 512, 10}

    int input_dim() const { return layer_sizes.front(); }
    int num_classes() const { return layer_sizes.back(); }
    std::size_t num_layers() const { return layer_sizes.size() - 1; }
    std::size_t param_count() const;
    void validate() const;

    bool operator==(const ModelSpec&) const = default;
};

/// Flat parameter vector conforming to a ModelSpec. Layout per layer:
/// weights (out x in, row-major), then biases (out).
struct ParamVector {
    std::vector<double> values;
    ModelSpec spec;

    void validate() const;
};

struct TrainConfig {
    int epochs = 20;
    int batch_size = 16;
    double learning_rate = 0.01;
    double weight_decay = 1e-3;
    std::uint64_t seed = 0;

    void validate() const;

    bool operator==(const TrainConfig&) const = default;
};

/// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] for weights and
/// biases, drawn from the seeded generator.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

/// Class probabilities for a batch (rows sum to 1; softmax with
/// max-subtraction stabilization).
Matrix forward(const ParamVector& params, const Matrix& inputs);

/// Per-sample cross-entropy -log p[label], not batch-averaged.
/// Probabilities are clamped to [1e-7, 1 - 1e-7] before the log.
std::vector<double> per_sample_loss(const ParamVector& params, const Matrix& inputs,
                                    const std::vector<int>& labels);

/// Gradient of (mean cross-entropy over the batch) plus the decoupled
/// weight-decay term wd * theta. Exposed so tests can check it against
/// finite differences layer by layer.
std::vector<double> gradient(const ParamVector& params, const Matrix& inputs,
                             const std::vector<int>& labels, double weight_decay);

/// Plain SGD for cfg.epochs over the dataset, shuffling once per epoch
/// with the seeded generator. Pure function of (params, dataset, cfg).
ParamVector train_local(const ParamVector& params, const Dataset& dataset, const TrainConfig& cfg);

/// Fraction of argmax-correct predictions; argmax ties go to the lowest
/// class index.
double evaluate(const ParamVector& params, const Dataset& test_set);

}  // namespace fedsentinel
