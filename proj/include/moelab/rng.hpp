#pragma once

#include <cmath>
#include <cstdint>

namespace moelab {

// Counter-based keyed generator (splitmix64 finalizer over a keyed counter).
// Every stochastic operation in the library takes an explicit seed and builds
// its own Rng, so serial and sharded runs derive identical streams. split()
// produces an independent child stream from a tag; child streams never
// collide with the parent's counter sequence.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(mix(seed ^ mix(stream * 0xD1B54A32D192ED03ULL + 0x9E6C63D0876A9A47ULL))) {}

    std::uint64_t next_u64() {
        ++ctr_;
        return mix(key_ + ctr_ * 0x9E3779B97F4A7C15ULL);
    }

    // uniform in [0,1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform in (0,1]
    double uniform_pos() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // standard normal, Box-Muller with pair caching
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform_pos();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // rejection to kill modulo bias
        std::uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    Rng split(std::uint64_t tag) const {
        Rng child(0);
        child.key_ = mix(key_ ^ mix(tag * 0xBF58476D1CE4E5B9ULL + 0x94D049BB133111EBULL));
        child.ctr_ = 0;
        child.has_cached_ = false;
        return child;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t key_;
    std::uint64_t ctr_ = 0;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

} // namespace moelab
