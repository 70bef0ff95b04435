#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedsentinel/matrix.hpp"

namespace fedsentinel {

/// A labelled dataset. Features are scaled to [0,1]; labels lie in [0, C).
struct Dataset {
    Matrix features;
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const { return labels.size(); }
    void validate() const;
};

struct PartitionConfig {
    int n_clients = 10;
    double alpha = 0.5;
    std::uint64_t seed = 0;
    int min_samples_per_client = 32;

    void validate() const;

    bool operator==(const PartitionConfig&) const = default;
};

/// Reads an IDX image/label pair (the MNIST distribution format: big-endian
/// dimensions, unsigned bytes). Pixels are scaled by 1/255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Writes a dataset as an IDX pair, quantizing features to bytes. Features
/// that are exact multiples of 1/255 round-trip exactly through load_idx.
void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path);

/// Gaussian class-conditional clusters clamped to [0,1] with balanced labels.
/// Class c's mean sits high on its own feature block and near zero elsewhere,
/// so distinct classes engage largely disjoint model weights, as strokes do
/// in digit images. The block geometry is deterministic and every class pair
/// is equidistant, with the active amplitude scaled so the between-class
/// margin does not depend on n_features: the seed only moves the sample
/// draws, and class overlap (Bayes error) is set by `noise` alone — 0.15
/// keeps classes nearly separable, larger values overlap them.
Dataset make_synthetic(std::size_t n_samples, int n_features, int n_classes, std::uint64_t seed,
                       double noise = 0.15);

/// Splits sample indices across clients, drawing each class's proportions
/// from Dirichlet(alpha). Clients below min_samples_per_client are topped
/// up by moving samples from the currently largest client.
std::vector<std::vector<std::size_t>> partition_dirichlet(const Dataset& ds, const PartitionConfig& cfg);

/// Label-shuffle data poisoning: permutes the existing labels uniformly at
/// random (the label multiset is preserved); features are untouched.
Dataset shuffle_labels(const Dataset& ds, std::uint64_t seed);

/// Mislabels each sample independently with probability rho, drawing the
/// replacement uniformly from the *other* classes. rho in [0, 1].
Dataset relabel_uniform(const Dataset& ds, double rho, std::uint64_t seed);

/// Dataset restricted to the given sample indices, in the given order.
Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices);

/// Deterministic shuffle-and-split into train/test.
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double test_fraction, std::uint64_t seed);

/// Class-stratified subsample of n indices (proportional allocation).
std::vector<std::size_t> stratified_subsample(const Dataset& ds, std::size_t n, std::uint64_t seed);

/// Resolves a CLI data spec into (train, test).
///   "idx:<dir>"                MNIST-layout IDX files under <dir>
///   "synthetic:<n>,<d>,<C>[,<noise>[,<rho>]]"
///                              generated clusters, 20% held out for test;
///                              noise defaults to 0.15; rho (default 0)
///                              mislabels that fraction of the *training*
///                              split via relabel_uniform — the test split
///                              stays clean
/// subsample_train/subsample_test of 0 mean "use everything".
std::pair<Dataset, Dataset> load_data_spec(const std::string& spec, std::uint64_t seed,
                                           std::size_t subsample_train = 0,
                                           std::size_t subsample_test = 0);

}  // namespace fedsentinel
