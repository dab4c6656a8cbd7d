#pragma once

#include <cstdint>
#include <random>

#include "madp/array.hpp"

namespace madp::nd {

// Deterministic random stream. mt19937_64 has a fully specified sequence, and
// the uniform/normal transforms below are hand-rolled so draws are bitwise
// reproducible across platforms and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Derives an independent child stream from a master seed. splitmix64 is
    // used as the mixer so nearby (seed, stream) pairs land far apart.
    static Rng derive(std::uint64_t master, std::uint64_t stream) {
        return Rng(splitmix64(master + 0x9e3779b97f4a7c15ULL * (stream + 1)));
    }

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Index uniform in [0, n). Rejection-free modulo is fine here: n is tiny
    // relative to 2^64 so the bias is far below any statistical test we run.
    std::size_t uniform_index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

    // Standard normal via Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double two_pi = 6.283185307179586476925286766559;
        spare_ = r * std::sin(two_pi * u2);
        has_spare_ = true;
        return r * std::cos(two_pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    void fill_normal(DenseArray& a, double stddev = 1.0) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = stddev * normal();
    }

    void fill_uniform(DenseArray& a, double lo, double hi) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = uniform(lo, hi);
    }

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace madp::nd
