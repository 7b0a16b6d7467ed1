// Seeded random number streams.
//
// Every experiment draws from a per-replica stream derived from (seed,
// replica_index), so replicas are reproducible and independent of scheduling.
// The uniform/exponential/normal mappings are spelled out here instead of
// using <random> distributions because the standard does not pin down the
// algorithm behind std::normal_distribution et al.; we want byte-identical
// output across toolchains, and the distributional-identity tests reuse one
// stream across two coupled runs and need the exact same draw sequence.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace metasim {

// splitmix64 finalizer; used to turn (seed, index) into well-mixed engine seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    // Stream for one replica: distinct indices give statistically unrelated
    // engine seeds (consecutive splitmix64 outputs).
    static Rng stream(std::uint64_t seed, std::uint64_t replica_index) {
        return Rng(seed + 0x9E3779B97F4A7C15ULL * (replica_index + 1));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform on (0, 1]; never returns 0, safe to take logs of.
    double uniform_pos() { return 1.0 - uniform(); }

    // Exp(1) via inversion. uniform() < 1 so the argument of log1p stays > -1.
    double exponential() { return -std::log1p(-uniform()); }

    // Standard normal via Box-Muller, pair-cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u = uniform_pos();
        double v = uniform();
        double r = std::sqrt(-2.0 * std::log(u));
        double a = 6.283185307179586476925286766559 * v;  // 2*pi*v
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace metasim
