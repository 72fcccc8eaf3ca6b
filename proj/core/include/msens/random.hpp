#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace msens {

/// Seedable generator with a fully specified output sequence.
///
/// The standard library fixes the raw output of std::mt19937_64 but leaves
/// distributions implementation-defined, so every derived draw here is spelled
/// out explicitly:
///   uniform01()      = (next() >> 11) * 2^-53, in [0, 1)
///   uniform_index(n) = rejection sampling on next() below the largest
///                      multiple of n, then modulo n
///   normal()         = Box-Muller, u1 = 1 - uniform01(), u2 = uniform01(),
///                      returns sqrt(-2 ln u1) * cos(2 pi u2); one value per call
///   bernoulli(p)     = uniform01() < p
///   shuffle          = Fisher-Yates from the back, j = uniform_index(i + 1)
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    double uniform01();
    double uniform(double lo, double hi);
    std::size_t uniform_index(std::size_t n);
    double normal();
    bool bernoulli(double p);

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// FNV-1a 64-bit hash of a byte string.
std::uint64_t fnv1a64(std::string_view bytes);

/// Child seed for a named stage and index:
/// mix64(mix64(seed ^ fnv1a64(stage)) + index).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage, std::uint64_t index = 0);

}  // namespace msens
