#pragma once

/**
 * @file rng.hpp
 * @brief Seeded random source with portable derived draws.
 *
 * std::mt19937_64 output is pinned by the standard, but the distribution
 * classes are not, so every draw here is built directly on raw engine words.
 * Two runs with the same seed produce identical streams on any platform.
 */

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dwn {

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, bound) by rejection.
    std::uint64_t below(std::uint64_t bound) {
        if (bound == 0) return 0;
        const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % bound;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % bound;
    }

    /// Standard normal via the polar method (no state beyond the engine).
    double normal() {
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        return u * std::sqrt(-2.0 * std::log(s) / s);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Fisher-Yates, identical order on every platform.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = std::size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<std::uint32_t> permutation(std::uint32_t n) {
        std::vector<std::uint32_t> p(n);
        for (std::uint32_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

    /// Independent substream for a tagged purpose (layer index, epoch, ...).
    Rng fork(std::uint64_t tag) const {
        std::uint64_t x = seed_ ^ (0x9E3779B97F4A7C15ull * (tag + 1));
        // splitmix64 finalizer
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        x = x ^ (x >> 31);
        return Rng(x);
    }

  private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

} // namespace dwn
