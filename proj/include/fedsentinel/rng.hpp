#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fedsentinel {

/// Derives an independent stream seed from (seed, stream) via SplitMix64.
/// Used to give every client/round/purpose its own generator so that
/// parallel and serial execution see identical random streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Deterministic random source. Wraps mt19937_64 (bit-exact per the
/// standard) and implements its own distributions, since the std::
/// distribution objects are implementation-defined and would break
/// cross-compiler reproducibility.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Unbiased integer in [0, bound) by rejection.
    std::uint64_t uniform_int(std::uint64_t bound);

    /// Standard normal (Box-Muller, pair cached).
    double normal();

    /// Gamma(shape, 1) via Marsaglia-Tsang; handles shape < 1 by boosting.
    double gamma(double shape);

    /// Dirichlet(alpha, ..., alpha) over n components.
    std::vector<double> dirichlet(double alpha, std::size_t n);

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_int(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fedsentinel
