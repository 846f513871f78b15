#pragma once

#include <cstdint>
#include <random>

#include "moi/matrix.hpp"

namespace moi {

/// Deterministic random stream. Draws are mapped from raw mt19937_64 output
/// with explicit arithmetic (53-bit mantissa scaling, rejection sampling,
/// Box-Muller) so the byte-level results depend only on the seed, not on the
/// standard library's distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (no second-value caching).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    // Uniform integer in [0, bound), rejection-sampled to avoid modulo bias.
    std::uint64_t integer(std::uint64_t bound) {
        const std::uint64_t max = ~std::uint64_t{0};
        const std::uint64_t limit = max - max % bound;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % bound;
    }

    std::uint64_t next_seed() { return gen_(); }

private:
    static constexpr double kPi = 3.14159265358979323846;
    std::mt19937_64 gen_;
};

// N(0, sigma=0.01) with rejection outside [-0.02, 0.02]; deterministic per seed.
Matrix truncated_normal_init(std::size_t rows, std::size_t cols, std::uint64_t seed,
                             double sigma = 0.01, double bound = 0.02);

// Inverted dropout: training zeroes each element with probability `rate` and
// scales survivors by 1/(1-rate); inference is the identity.
Matrix dropout(const Matrix& x, double rate, bool training, std::uint64_t seed);

// The 0 / 1/(1-rate) mask itself, for use as a multiplicative constant.
Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng);

}  // namespace moi
