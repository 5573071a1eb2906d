#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mvprof {

// splitmix64 stream. The recurrence and mixing constants are pinned so that
// any implementation seeded identically reproduces the exact same stream:
//   state += 0x9E3779B97F4A7C15
//   z = state; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9
//   z = (z ^ z>>27) * 0x94D049BB133111EB; return z ^ z>>31
// Gaussian draws use Box-Muller (cosine branch) on exactly two uniform draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 mantissa bits.
    double next_uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double next_gaussian() {
        double u1 = 1.0 - next_uniform(); // (0, 1], keeps log finite
        double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    // Modulo draw; bias is irrelevant for the small ranges used here and the
    // rule is trivially portable.
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    // Derived stream keyed on (original seed, stream id); independent of how
    // much of this stream was consumed before the fork.
    Rng fork(std::uint64_t stream) const {
        Rng mixer(stream + 0x632BE59BD9B4E019ull);
        return Rng(seed_ ^ mixer.next_u64());
    }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

} // namespace mvprof
