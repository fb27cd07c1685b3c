#pragma once

// Counter-based random streams.
//
// Every draw is a pure function of (key, counter), so any sample in any
// stream can be regenerated in isolation: parallel consumers get identical
// results regardless of thread count, and persisted seeds reproduce whole
// sample sequences bit for bit on the same platform.

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace pacbayes {

// SplitMix64 finalizer. Invertible, passes BigCrush as a stream cipher core.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives a stream key from a seed and a path of integers (module tag,
// step index, datum index, ...). Order-sensitive.
inline std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t k = mix64(seed ^ 0x5851f42d4c957f2dULL);
    for (std::uint64_t p : path) k = mix64(k ^ mix64(p));
    return k;
}

class CounterRng {
  public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}
    CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> path)
        : key_(derive_key(seed, path)) {}

    std::uint64_t next_u64() { return mix64(key_ ^ mix64(++counter_)); }

    // Uniform on [0, 1): 53 explicit mantissa bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]: safe as a log argument.
    double next_double_open() { return 1.0 - next_double(); }

    // Standard normal via Box-Muller. Consumes two uniforms per call; the
    // sine half is discarded so draws stay independent of call history.
    double next_gaussian() {
        double u1 = next_double_open();
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, n). Rejection-free modulo is fine here: n is
    // always tiny relative to 2^64, bias is below 2^-50.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    std::uint64_t counter() const { return counter_; }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace pacbayes
