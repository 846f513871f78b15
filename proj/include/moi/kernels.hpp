#pragma once

#include <vector>

#include "moi/matrix.hpp"

namespace moi {

// Dense kernels. The default entry points parallelize their outer loop with
// OpenMP when the problem is large enough; every output element is written by
// exactly one thread and its inner accumulation order is fixed, so results are
// bit-identical to the serial reference regardless of thread count.

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);
Matrix transpose(const Matrix& a);

// Elementwise exact GELU x * Phi(x) with the Gaussian CDF.
Matrix gelu(const Matrix& x);
double gelu_scalar(double x);
double gelu_derivative(double x);

// Each row normalized to mean 0 / unit population variance (eps inside the
// square root), then scaled by gamma and shifted by beta (both 1 x cols).
Matrix layernorm(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                 double eps = 1e-12);

// Max-subtracted softmax; output sums to 1 within 1e-12.
std::vector<double> softmax(const std::vector<double>& x);

// Broadcast helpers used by layers and the gradient tape.
Matrix add_row_broadcast(const Matrix& a, const Matrix& row);   // a + 1*row
Matrix mul_row_broadcast(const Matrix& a, const Matrix& row);   // a (.) 1*row
Matrix column_sums(const Matrix& a);                            // 1 x cols
double sum_all(const Matrix& a);

// Rows rescaled to unit Euclidean norm; all-zero rows pass through unchanged.
Matrix l2_normalize_rows(const Matrix& x);

// Serial reference kernels, kept for equivalence tests and the benchmark.
namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix gelu(const Matrix& x);
Matrix layernorm(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                 double eps = 1e-12);
}  // namespace serial

}  // namespace moi
