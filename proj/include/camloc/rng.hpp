#pragma once

// Deterministic random number utilities.
//
// Everything stochastic in this library flows through Rng, which wraps
// std::mt19937 (whose output sequence is fully specified by the standard)
// with hand-rolled distribution transforms. The standard library's
// distribution objects are NOT used because their algorithms are
// implementation-defined; uniform/normal/shuffle here produce identical
// streams on every platform for a given seed.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace camloc {

// splitmix64: used to derive well-separated child seeds from a master
// seed plus a stream of salt words. Distinct salt tuples give
// effectively independent generators.
inline std::uint64_t hash_seed(std::uint64_t seed) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

template <class... Salt>
std::uint64_t hash_seed(std::uint64_t seed, std::uint64_t salt0, Salt... rest) {
    return hash_seed(hash_seed(seed) ^ salt0, static_cast<std::uint64_t>(rest)...);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed)
        : engine_(static_cast<std::mt19937::result_type>(hash_seed(seed))) {}

    // Derive an independent child generator. Same (seed, salts) always
    // yields the same child stream regardless of draw order elsewhere.
    template <class... Salt>
    static Rng child(std::uint64_t seed, Salt... salts) {
        Rng r(0);
        r.engine_.seed(static_cast<std::mt19937::result_type>(
            hash_seed(seed, static_cast<std::uint64_t>(salts)...)));
        return r;
    }

    std::uint32_t next_u32() { return engine_(); }

    // Uniform in [0, 1): 32 random bits scaled by 2^-32.
    double uniform() {
        return static_cast<double>(engine_()) * 0x1.0p-32;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Unbiased integer in [0, n) via rejection sampling.
    std::uint32_t uniform_int(std::uint32_t n) {
        if (n == 0) return 0;
        const std::uint32_t limit = 0xffffffffu - (0xffffffffu % n + 1) % n;
        std::uint32_t v = engine_();
        while (v > limit) v = engine_();
        return v % n;
    }

    // Standard normal via Box-Muller. Both variates are consumed per pair
    // so the stream advances identically on all platforms.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) {
        return mean + stddev * normal();
    }

    // Fisher-Yates, descending index order.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = uniform_int(static_cast<std::uint32_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace camloc
