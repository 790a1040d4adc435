#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace sat {

// splitmix64 finalizer; also used as a stateless hash for counter-based streams.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) {
    return mix64(a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2) + mix64(b)));
}

inline uint64_t mix64(uint64_t a, uint64_t b, uint64_t c) {
    return mix64(mix64(a, b), c);
}

// Converts 64 random bits to a double in [0,1).
inline double u64_to_unit(uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Deterministic generator with a fixed algorithm so results are identical
// across platforms and standard-library versions. Distributions are
// hand-rolled for the same reason.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0,1)
    double uniform() { return u64_to_unit(next_u64()); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // {0, 1, ..., n-1}
    size_t below(size_t n) { return n == 0 ? 0 : static_cast<size_t>(next_u64() % n); }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0,1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Fisher-Yates, fixed algorithm (std::shuffle is implementation-defined).
    template <class T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (size_t i = v.size() - 1; i > 0; --i) {
            size_t j = below(i + 1);
            std::swap(v[i], v[j]);
        }
    }

    std::vector<size_t> permutation(size_t n) {
        std::vector<size_t> p(n);
        for (size_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

private:
    uint64_t state_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace sat
