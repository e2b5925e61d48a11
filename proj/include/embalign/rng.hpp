#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace embalign {

/// PCG32 (XSH-RR output, 64-bit LCG state). Seeded by (seed, stream) so that
/// independent streams can be handed to trees or samples without coordination.
class Pcg32 {
public:
    Pcg32(std::uint64_t seed, std::uint64_t stream = 0) noexcept
        : inc_((stream << 1u) | 1u) {
        next();
        state_ += seed;
        next();
    }

    std::uint32_t next() noexcept {
        const std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        const auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    /// Uniform integer in [0, bound) by rejection; bound must be > 0.
    std::uint32_t bounded(std::uint32_t bound) noexcept {
        const std::uint32_t threshold = (0u - bound) % bound;
        for (;;) {
            const std::uint32_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept {
        const std::uint64_t hi = next() >> 5;  // 27 bits
        const std::uint64_t lo = next() >> 6;  // 26 bits
        return static_cast<double>((hi << 26) | lo) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; the spare value is cached.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return mag * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace embalign
