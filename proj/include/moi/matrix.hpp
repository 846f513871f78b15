#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace moi {

// Shape mismatch between operands, message names both shapes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration value (bad key, out-of-range hyperparameter).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid runtime input (id out of range, empty sequence, malformed data).
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File system failure.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles, the universal value/gradient carrier.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> values) {
        Matrix m;
        m.rows = values.size();
        m.cols = m.rows ? values.begin()->size() : 0;
        m.data.reserve(m.rows * m.cols);
        for (const auto& row : values) {
            if (row.size() != m.cols) {
                throw ShapeError("from_rows: ragged initializer");
            }
            m.data.insert(m.data.end(), row.begin(), row.end());
        }
        return m;
    }

    static Matrix row_vector(std::initializer_list<double> values) {
        Matrix m(1, values.size());
        std::size_t j = 0;
        for (double v : values) m.data[j++] = v;
        return m;
    }

    static Matrix row_vector(const std::vector<double>& values) {
        Matrix m(1, values.size());
        m.data = values;
        return m;
    }

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::size_t size() const { return rows * cols; }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    std::string shape_str() const {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }
};

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
    }
}

}  // namespace moi
