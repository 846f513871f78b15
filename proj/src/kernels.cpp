#include "moi/kernels.hpp"

#include <cmath>
#include <cstdint>

namespace moi {

namespace {

// Below this element count the OpenMP fork/join overhead dominates.
constexpr std::size_t kParallelThreshold = 16384;

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void check_matmul_shapes(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() +
                         " vs " + b.shape_str());
    }
}

void layernorm_row(const double* x, double* y, std::size_t n,
                   const double* gamma, const double* beta, double eps) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double d = x[j] - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
        y[j] = gamma[j] * ((x[j] - mean) * inv_std) + beta[j];
    }
}

void check_norm_shapes(const Matrix& x, const Matrix& gamma, const Matrix& beta) {
    if (gamma.rows != 1 || gamma.cols != x.cols || beta.rows != 1 || beta.cols != x.cols) {
        throw ShapeError("layernorm: gamma/beta must be 1x" + std::to_string(x.cols) +
                         ", got " + gamma.shape_str() + " and " + beta.shape_str());
    }
}

}  // namespace

double gelu_scalar(double x) {
    return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_matmul_shapes(a, b);
    Matrix c(a.rows, b.cols);
    const std::int64_t m = static_cast<std::int64_t>(a.rows);
    const std::size_t k = a.cols, n = b.cols;
#pragma omp parallel for schedule(static) if (a.rows * k * n > kParallelThreshold)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a.data.data() + static_cast<std::size_t>(i) * k;
        double* crow = c.data.data() + static_cast<std::size_t>(i) * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b.data.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix c(a.rows, a.cols);
    const std::int64_t n = static_cast<std::int64_t>(a.size());
#pragma omp parallel for schedule(static) if (a.size() > kParallelThreshold)
    for (std::int64_t i = 0; i < n; ++i) {
        c.data[i] = a.data[i] * b.data[i];
    }
    return c;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix c(a.rows, a.cols);
    for (std::size_t i = 0; i < a.size(); ++i) c.data[i] = a.data[i] + b.data[i];
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix c(a.rows, a.cols);
    for (std::size_t i = 0; i < a.size(); ++i) c.data[i] = a.data[i] - b.data[i];
    return c;
}

Matrix scale(const Matrix& a, double c) {
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * c;
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            t.at(j, i) = a.at(i, j);
        }
    }
    return t;
}

Matrix gelu(const Matrix& x) {
    Matrix y(x.rows, x.cols);
    const std::int64_t n = static_cast<std::int64_t>(x.size());
#pragma omp parallel for schedule(static) if (x.size() > kParallelThreshold)
    for (std::int64_t i = 0; i < n; ++i) {
        y.data[i] = gelu_scalar(x.data[i]);
    }
    return y;
}

Matrix layernorm(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps) {
    check_norm_shapes(x, gamma, beta);
    Matrix y(x.rows, x.cols);
    const std::int64_t m = static_cast<std::int64_t>(x.rows);
#pragma omp parallel for schedule(static) if (x.size() > kParallelThreshold)
    for (std::int64_t i = 0; i < m; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * x.cols;
        layernorm_row(x.data.data() + off, y.data.data() + off, x.cols,
                      gamma.data.data(), beta.data.data(), eps);
    }
    return y;
}

std::vector<double> softmax(const std::vector<double>& x) {
    std::vector<double> y(x.size());
    if (x.empty()) return y;
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = std::exp(x[i] - mx);
        z += y[i];
    }
    for (double& v : y) v /= z;
    return y;
}

Matrix add_row_broadcast(const Matrix& a, const Matrix& row) {
    if (row.rows != 1 || row.cols != a.cols) {
        throw ShapeError("add_row_broadcast: row must be 1x" + std::to_string(a.cols) +
                         ", got " + row.shape_str());
    }
    Matrix c(a.rows, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            c.at(i, j) = a.at(i, j) + row.data[j];
        }
    }
    return c;
}

Matrix mul_row_broadcast(const Matrix& a, const Matrix& row) {
    if (row.rows != 1 || row.cols != a.cols) {
        throw ShapeError("mul_row_broadcast: row must be 1x" + std::to_string(a.cols) +
                         ", got " + row.shape_str());
    }
    Matrix c(a.rows, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            c.at(i, j) = a.at(i, j) * row.data[j];
        }
    }
    return c;
}

Matrix column_sums(const Matrix& a) {
    Matrix s(1, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            s.data[j] += a.at(i, j);
        }
    }
    return s;
}

double sum_all(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data) s += v;
    return s;
}

Matrix l2_normalize_rows(const Matrix& x) {
    Matrix y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) sq += x.at(i, j) * x.at(i, j);
        const double norm = std::sqrt(sq);
        if (norm == 0.0) {
            for (std::size_t j = 0; j < x.cols; ++j) y.at(i, j) = x.at(i, j);
        } else {
            for (std::size_t j = 0; j < x.cols; ++j) y.at(i, j) = x.at(i, j) / norm;
        }
    }
    return y;
}

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_matmul_shapes(a, b);
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t p = 0; p < a.cols; ++p) {
            const double av = a.at(i, p);
            for (std::size_t j = 0; j < b.cols; ++j) {
                c.at(i, j) += av * b.at(p, j);
            }
        }
    }
    return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix c(a.rows, a.cols);
    for (std::size_t i = 0; i < a.size(); ++i) c.data[i] = a.data[i] * b.data[i];
    return c;
}

Matrix gelu(const Matrix& x) {
    Matrix y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = gelu_scalar(x.data[i]);
    return y;
}

Matrix layernorm(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps) {
    check_norm_shapes(x, gamma, beta);
    Matrix y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        layernorm_row(x.data.data() + i * x.cols, y.data.data() + i * x.cols,
                      x.cols, gamma.data.data(), beta.data.data(), eps);
    }
    return y;
}

}  // namespace serial

}  // namespace moi
