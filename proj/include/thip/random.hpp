#ifndef THIP_RANDOM_HPP
#define THIP_RANDOM_HPP

#include <cstddef>
#include <cstdint>
#include <random>

namespace thip {

/// Seeded generator with draws defined bit-for-bit on top of mt19937_64,
/// so runs reproduce across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n); n must be positive.
    std::size_t below(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

} // namespace thip

#endif // THIP_RANDOM_HPP
