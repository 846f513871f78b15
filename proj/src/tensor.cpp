#include "moi/tensor.hpp"

#include <string>

namespace moi {

namespace {

std::size_t checked_element_count(const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (std::size_t d : dims) {
        if (d == 0) throw ShapeError("tensor dimension must be positive");
        if (n > kOracleSizeCap / d) {
            throw ConfigError("tensor exceeds the oracle size cap of " +
                              std::to_string(kOracleSizeCap) + " elements");
        }
        n *= d;
    }
    return n;
}

}  // namespace

DenseTensor::DenseTensor(std::vector<std::size_t> d) : dims(std::move(d)) {
    data.assign(checked_element_count(dims), 0.0);
}

std::size_t DenseTensor::size() const {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
}

DenseTensor mode_product(const DenseTensor& t, const std::vector<double>& x,
                         std::size_t mode) {
    if (mode >= t.order()) {
        throw ShapeError("mode_product: mode " + std::to_string(mode) +
                         " out of range for order-" + std::to_string(t.order()) +
                         " tensor");
    }
    if (x.size() != t.dims[mode]) {
        throw ShapeError("mode_product: vector length " + std::to_string(x.size()) +
                         " does not match extent " + std::to_string(t.dims[mode]) +
                         " of mode " + std::to_string(mode));
    }
    std::vector<std::size_t> out_dims;
    out_dims.reserve(t.order() - 1);
    for (std::size_t i = 0; i < t.order(); ++i) {
        if (i != mode) out_dims.push_back(t.dims[i]);
    }
    DenseTensor out(out_dims);

    // outer: product of dims before `mode`; inner: product after it.
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < mode; ++i) outer *= t.dims[i];
    for (std::size_t i = mode + 1; i < t.order(); ++i) inner *= t.dims[i];
    const std::size_t extent = t.dims[mode];

    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t m = 0; m < extent; ++m) {
            const double xv = x[m];
            const std::size_t base = (o * extent + m) * inner;
            double* dst = out.data.data() + o * inner;
            const double* src = t.data.data() + base;
            for (std::size_t in = 0; in < inner; ++in) {
                dst[in] += xv * src[in];
            }
        }
    }
    return out;
}

FullInteractionTensor::FullInteractionTensor(std::size_t k, DenseTensor w)
    : order(k), weights(std::move(w)) {
    if (weights.order() != k + 1) {
        throw ShapeError("interaction tensor of order " + std::to_string(k) +
                         " needs " + std::to_string(k + 1) + " modes, got " +
                         std::to_string(weights.order()));
    }
    out_dim = weights.dims.back();
    checked_element_count(weights.dims);
}

std::vector<double> exact_interaction(const FullInteractionTensor& t,
                                      const std::vector<std::vector<double>>& inputs) {
    if (inputs.size() != t.order) {
        throw ShapeError("exact_interaction: expected " + std::to_string(t.order) +
                         " inputs, got " + std::to_string(inputs.size()));
    }
    DenseTensor cur = t.weights;
    // Contracting the leading mode each time consumes x_1, ..., x_k in order.
    for (const std::vector<double>& x : inputs) {
        cur = mode_product(cur, x, 0);
    }
    return cur.data;
}

DenseTensor materialize_rank1(const std::vector<Matrix>& factors) {
    if (factors.empty()) throw ShapeError("materialize_rank1: no factors");
    const std::size_t h = factors.front().cols;
    std::vector<std::size_t> dims;
    dims.reserve(factors.size() + 1);
    for (const Matrix& w : factors) {
        if (w.cols != h) {
            throw ShapeError("materialize_rank1: factor width " + std::to_string(w.cols) +
                             " differs from " + std::to_string(h));
        }
        dims.push_back(w.rows);
    }
    dims.push_back(h);
    DenseTensor t(dims);

    const std::size_t k = factors.size();
    std::vector<std::size_t> idx(k, 0);
    std::size_t pos = 0;
    for (;;) {
        for (std::size_t j = 0; j < h; ++j) {
            double prod = 1.0;
            for (std::size_t m = 0; m < k; ++m) prod *= factors[m].at(idx[m], j);
            t.data[pos++] = prod;
        }
        // odometer over (i_1, ..., i_k)
        std::size_t m = k;
        while (m-- > 0) {
            if (++idx[m] < factors[m].rows) break;
            idx[m] = 0;
            if (m == 0) return t;
        }
    }
}

}  // namespace moi
