#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace dirguide {

// std::mt19937_64 output is pinned by the standard; the std distributions and
// std::shuffle are not. Everything seeded goes through these helpers so runs
// are byte-identical across platforms and standard libraries.

using Rng = std::mt19937_64;

/// Uniform integer in [0, n) by masked rejection. n must be > 0.
std::uint64_t uniform_below(Rng& rng, std::uint64_t n);

/// In-place Fisher-Yates.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

/// k distinct indices drawn uniformly from [0, n), in draw order.
std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n, std::size_t k);

/// Stable mix of a seed with a stream index, for independent substreams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace dirguide
