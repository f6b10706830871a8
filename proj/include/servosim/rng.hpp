#pragma once

// Counter-based pseudo-random streams. Every draw is a pure function of the
// key tuple, so individual frames and pixels are reproducible in isolation.

#include <cmath>
#include <cstdint>

namespace servosim {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t mix_key(uint64_t seed, uint64_t stream, uint64_t counter) {
    uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc909ull);
    h = splitmix64(h ^ stream);
    return splitmix64(h ^ counter);
}

// Uniform in [0, 1), 53-bit mantissa.
inline double uniform01(uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Standard normal keyed by (seed, stream, counter); Box-Muller on two
// decorrelated uniforms derived from the same key.
inline double gaussian(uint64_t seed, uint64_t stream, uint64_t counter) {
    uint64_t h = mix_key(seed, stream, counter);
    double u1 = uniform01(h);
    double u2 = uniform01(splitmix64(h ^ 0xd1b54a32d192ed03ull));
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Small sequential generator for tests and pose sampling.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x9e3779b97f4a7c15ull)) {}

    uint64_t next_u64() {
        state_ = splitmix64(state_);
        return state_;
    }

    double uniform() { return uniform01(next_u64()); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
    }

    double normal() {
        double u1 = uniform(), u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

  private:
    uint64_t state_;
};

}  // namespace servosim
