#pragma once

#include <cstdint>
#include <random>

namespace skyseg {

// SplitMix64 finalizer. Used both to derive independent stream seeds from a
// root seed and as a stateless per-index hash (order-free, reproducible).
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_mix(uint64_t seed, uint64_t v) {
    return splitmix64(seed ^ splitmix64(v));
}

template <typename... Rest>
uint64_t hash_mix(uint64_t seed, uint64_t v, Rest... rest) {
    return hash_mix(hash_mix(seed, v), rest...);
}

// Uniform in [0, 1) from a hash value.
inline float hash_unit(uint64_t h) {
    return static_cast<float>(h >> 40) * 0x1.0p-24f;
}

// Seeded engine wrapper. Draws floats from raw engine output rather than
// std distributions so that sequences are identical across standard
// libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next() { return engine_(); }

    // Uniform in [0, 1).
    float unit() { return static_cast<float>(next() >> 40) * 0x1.0p-24f; }

    double unit_d() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    float uniform(float lo, float hi) { return lo + (hi - lo) * unit(); }

    // Uniform index in [0, n). Modulo bias is ~n / 2^64, irrelevant here.
    size_t index(size_t n) { return static_cast<size_t>(next() % n); }

private:
    std::mt19937_64 engine_;
};

}  // namespace skyseg
