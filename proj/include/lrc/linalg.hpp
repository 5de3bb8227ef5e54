// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense real linear algebra for the decomposition routines: a row-major
// double matrix, one-sided Jacobi SVD, cyclic Jacobi symmetric
// eigendecomposition, and a streaming second-moment accumulator.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace lrc {

using Vector = std::vector<double>;

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    // Takes ownership of row-major data; throws DataError on size mismatch.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& storage() { return data_; }

    Matrix transposed() const;
    Vector column(std::size_t c) const;
    bool all_finite() const;
    double frobenius_norm() const;
    double trace() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, std::span<const double> x);
Matrix subtract(const Matrix& a, const Matrix& b);
double frobenius_distance(const Matrix& a, const Matrix& b);
// Leading `count` columns (rows) as a new matrix.
Matrix leading_columns(const Matrix& m, std::size_t count);
Matrix leading_rows(const Matrix& m, std::size_t count);

struct SvdResult {
    Matrix u;     // rows × rows, orthonormal columns
    Vector sigma; // min(rows, cols), nonincreasing
    Matrix vt;    // cols × cols, orthonormal rows
};

struct EighResult {
    Vector eigenvalues;  // nonincreasing
    Matrix eigenvectors; // columns are eigenvectors
};

inline constexpr int kMaxJacobiSweeps = 100;

// Full SVD via one-sided Jacobi. Throws NumericalError on non-finite input or
// when the sweep cap is hit.
SvdResult svd(const Matrix& m);

// Symmetric eigendecomposition via cyclic Jacobi on (s + sᵀ)/2. Throws
// DataError for non-square input and NumericalError on non-finite input or
// non-convergence.
EighResult eigh_symmetric(const Matrix& s);

// Streaming uncentered second moment Σ y·yᵀ of a layer's outputs, plus the
// running input sum used for the mean input.
class GramAccumulator {
public:
    GramAccumulator() = default;
    GramAccumulator(std::size_t dim_out, std::size_t dim_in);
    static GramAccumulator from_parts(Matrix gram, Vector input_sum, uint64_t sample_count);

    // Columns of x_batch / y_batch are samples. Throws DataError on shape
    // mismatch.
    void accumulate(const Matrix& x_batch, const Matrix& y_batch);
    // Element-wise addition of an independently built accumulator.
    void merge(const GramAccumulator& other);

    std::size_t dim_out() const { return gram_.rows(); }
    std::size_t dim_in() const { return input_sum_.size(); }
    const Matrix& gram() const { return gram_; }
    const Vector& input_sum() const { return input_sum_; }
    uint64_t sample_count() const { return sample_count_; }
    // input_sum / sample_count; throws DataError when empty.
    Vector input_mean() const;

    bool operator==(const GramAccumulator&) const = default;

private:
    Matrix gram_;
    Vector input_sum_;
    uint64_t sample_count_ = 0;
};

} // namespace lrc
