#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace trustnbr {

/// Seeded generator with portable draws.
///
/// The standard distributions are implementation-defined, so integer, uniform and
/// normal draws are derived here directly from mt19937_64 output. Every artifact
/// produced from a fixed seed is therefore identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed);
    /// Independent stream keyed by several integers, e.g. (seed, tree index).
    Rng(std::initializer_list<std::uint64_t> key);

    std::uint64_t next() { return engine_(); }
    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);
    /// Uniform double in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(items[i - 1], items[j]);
        }
    }
    template <typename T>
    void shuffle(std::vector<T>& items) { shuffle(std::span<T>(items)); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace trustnbr
