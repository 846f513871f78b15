#include "moi/rng.hpp"

#include <cmath>

#include "moi/kernels.hpp"

namespace moi {

Matrix truncated_normal_init(std::size_t rows, std::size_t cols, std::uint64_t seed,
                             double sigma, double bound) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (double& v : m.data) {
        double z;
        do {
            z = rng.normal() * sigma;
        } while (z < -bound || z > bound);
        v = z;
    }
    return m;
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    Matrix mask(rows, cols, 1.0);
    if (rate == 0.0) return mask;
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& v : mask.data) {
        v = (rng.uniform() < rate) ? 0.0 : keep_scale;
    }
    return mask;
}

Matrix dropout(const Matrix& x, double rate, bool training, std::uint64_t seed) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) return x;
    Rng rng(seed);
    Matrix mask = dropout_mask(x.rows, x.cols, rate, rng);
    return hadamard(x, mask);
}

}  // namespace moi
