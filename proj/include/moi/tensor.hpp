#pragma once

#include <cstddef>
#include <vector>

#include "moi/matrix.hpp"

namespace moi {

/// Dense N-way tensor, row-major with the last index fastest. Exists only to
/// provide an exact contraction oracle at desk scale; the element count is
/// capped accordingly.
struct DenseTensor {
    std::vector<std::size_t> dims;
    std::vector<double> data;

    DenseTensor() = default;
    explicit DenseTensor(std::vector<std::size_t> d);

    std::size_t order() const { return dims.size(); }
    std::size_t size() const;
};

constexpr std::size_t kOracleSizeCap = 10'000'000;

// Contracts x against the given mode (0-based); the result's order drops by one.
DenseTensor mode_product(const DenseTensor& t, const std::vector<double>& x,
                         std::size_t mode);

/// Full interaction weight tensor of shape d_1 x ... x d_k x h.
struct FullInteractionTensor {
    std::size_t order = 0;    // k
    std::size_t out_dim = 0;  // h
    DenseTensor weights;      // dims = {d_1, ..., d_k, h}

    FullInteractionTensor() = default;
    FullInteractionTensor(std::size_t k, DenseTensor w);

    std::size_t input_dim(std::size_t i) const { return weights.dims[i]; }
};

// Exact k-fold contraction z = (((T x_1) x_2) ... x_k); the ground-truth
// oracle every low-rank path is tested against.
std::vector<double> exact_interaction(const FullInteractionTensor& t,
                                      const std::vector<std::vector<double>>& inputs);

// Builds T[i_1,...,i_k,j] = prod_m W_m[i_m, j], the rank-1 superdiagonal-core
// contraction of the given factor matrices (each d_i x h).
DenseTensor materialize_rank1(const std::vector<Matrix>& factors);

}  // namespace moi
