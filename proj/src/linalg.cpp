// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "lrc/errors.hpp"

namespace lrc {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

// Rotates the pair (a, b) in place: a' = c·a − s·b, b' = s·a + c·b.
void rotate(std::span<double> a, std::span<double> b, double c, double s) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i];
        const double y = b[i];
        a[i] = c * x - s * y;
        b[i] = s * x + c * y;
    }
}

// Smaller root of t² + 2θt − 1 = 0, the tangent of the Jacobi angle.
double jacobi_tangent(double theta) {
    if (std::abs(theta) > 1e150) {
        return 0.5 / theta;
    }
    const double t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
    return theta < 0.0 ? -t : t;
}

std::vector<std::size_t> descending_order(const Vector& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    return order;
}

// Extends the orthonormal rows already in `basis` (each of length dim) to a
// full orthonormal basis of R^dim. Each new vector starts from the unit
// vector with the largest residual after projection, then is orthogonalized
// twice.
void complete_basis(std::vector<Vector>& basis, std::size_t dim) {
    while (basis.size() < dim) {
        std::size_t best = 0;
        double best_residual = -1.0;
        for (std::size_t j = 0; j < dim; ++j) {
            double captured = 0.0;
            for (const Vector& b : basis) {
                captured += b[j] * b[j];
            }
            const double residual = 1.0 - captured;
            if (residual > best_residual) {
                best_residual = residual;
                best = j;
            }
        }
        Vector v(dim, 0.0);
        v[best] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (const Vector& b : basis) {
                const double proj = dot(b, v);
                for (std::size_t i = 0; i < dim; ++i) {
                    v[i] -= proj * b[i];
                }
            }
        }
        const double norm = std::sqrt(dot(v, v));
        for (double& x : v) {
            x /= norm;
        }
        basis.push_back(std::move(v));
    }
}

// One-sided Jacobi for rows >= cols.
SvdResult svd_tall(const Matrix& m) {
    const std::size_t rows = m.rows();
    const std::size_t cols = m.cols();

    // Work on columns of m as contiguous rows of g; v_rows holds Vᵀ.
    Matrix g = m.transposed();
    Matrix v_rows = Matrix::identity(cols);

    const double norm2 = [&] {
        const double f = m.frobenius_norm();
        return f * f;
    }();
    const double abs_floor = 1e-32 * norm2;

    bool converged = false;
    int sweep = 0;
    for (; sweep < kMaxJacobiSweeps; ++sweep) {
        std::size_t rotations = 0;
        for (std::size_t p = 0; p + 1 < cols; ++p) {
            for (std::size_t q = p + 1; q < cols; ++q) {
                auto gp = g.row(p);
                auto gq = g.row(q);
                const double alpha = dot(gp, gp);
                const double beta = dot(gq, gq);
                const double gamma = dot(gp, gq);
                if (std::abs(gamma) <= kEps * std::sqrt(alpha * beta) ||
                    std::abs(gamma) <= abs_floor) {
                    continue;
                }
                const double t = jacobi_tangent((beta - alpha) / (2.0 * gamma));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate(gp, gq, c, s);
                rotate(v_rows.row(p), v_rows.row(q), c, s);
                ++rotations;
            }
        }
        if (rotations == 0) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "svd: one-sided Jacobi did not converge within " << kMaxJacobiSweeps
            << " sweeps on a " << rows << "x" << cols << " matrix";
        throw NumericalError(msg.str());
    }

    Vector norms(cols);
    for (std::size_t k = 0; k < cols; ++k) {
        norms[k] = std::sqrt(dot(g.row(k), g.row(k)));
    }
    const auto order = descending_order(norms);

    SvdResult out;
    out.sigma.resize(cols);
    out.vt = Matrix(cols, cols);
    const double sigma_max = cols > 0 ? norms[order[0]] : 0.0;
    const double cut = sigma_max * 1e-13;

    std::vector<Vector> left;
    left.reserve(rows);
    for (std::size_t k = 0; k < cols; ++k) {
        const std::size_t src = order[k];
        out.sigma[k] = norms[src];
        std::copy(v_rows.row(src).begin(), v_rows.row(src).end(), out.vt.row(k).begin());
    }
    // Left vectors for numerically nonzero singular values come from the
    // rotated columns; the rest of U is an orthonormal completion.
    std::size_t kept = 0;
    while (kept < cols && out.sigma[kept] > cut && out.sigma[kept] > 0.0) {
        const auto src = g.row(order[kept]);
        Vector u(src.begin(), src.end());
        for (double& x : u) {
            x /= out.sigma[kept];
        }
        left.push_back(std::move(u));
        ++kept;
    }
    complete_basis(left, rows);

    out.u = Matrix(rows, rows);
    for (std::size_t k = 0; k < rows; ++k) {
        for (std::size_t i = 0; i < rows; ++i) {
            out.u(i, k) = left[k][i];
        }
    }
    return out;
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        std::ostringstream msg;
        msg << "Matrix: " << rows_ << "x" << cols_ << " needs " << rows_ * cols_
            << " values, got " << data_.size();
        throw DataError(msg.str());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw DataError("Matrix::from_rows: ragged rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
            t(c, r) = (*this)(r, c);
        }
    }
    return t;
}

Vector Matrix::column(std::size_t c) const {
    Vector v(rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        v[r] = (*this)(r, c);
    }
    return v;
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

double Matrix::frobenius_norm() const { return std::sqrt(dot(data_, data_)); }

double Matrix::trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) {
        t += (*this)(i, i);
    }
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        std::ostringstream msg;
        msg << "matmul: inner dimensions differ (" << a.rows() << "x" << a.cols() << " · "
            << b.rows() << "x" << b.cols() << ")";
        throw DataError(msg.str());
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto dst = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            const auto src = b.row(k);
            for (std::size_t j = 0; j < dst.size(); ++j) {
                dst[j] += aik * src[j];
            }
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw DataError("matmul_tn: row counts differ");
    }
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const auto ak = a.row(k);
        const auto bk = b.row(k);
        for (std::size_t i = 0; i < ak.size(); ++i) {
            const double aki = ak[i];
            auto dst = out.row(i);
            for (std::size_t j = 0; j < bk.size(); ++j) {
                dst[j] += aki * bk[j];
            }
        }
    }
    return out;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) {
        throw DataError("matvec: dimension mismatch");
    }
    Vector y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        y[i] = dot(a.row(i), x);
    }
    return y;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DataError("subtract: shape mismatch");
    }
    Matrix out = a;
    auto dst = out.data();
    const auto src = b.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] -= src[i];
    }
    return out;
}

double frobenius_distance(const Matrix& a, const Matrix& b) {
    return subtract(a, b).frobenius_norm();
}

Matrix leading_columns(const Matrix& m, std::size_t count) {
    if (count > m.cols()) {
        throw DataError("leading_columns: count exceeds column count");
    }
    Matrix out(m.rows(), count);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        std::copy_n(m.row(r).begin(), count, out.row(r).begin());
    }
    return out;
}

Matrix leading_rows(const Matrix& m, std::size_t count) {
    if (count > m.rows()) {
        throw DataError("leading_rows: count exceeds row count");
    }
    const auto src = m.data().first(count * m.cols());
    return Matrix(count, m.cols(), std::vector<double>(src.begin(), src.end()));
}

SvdResult svd(const Matrix& m) {
    if (m.rows() == 0 || m.cols() == 0) {
        throw DataError("svd: empty matrix");
    }
    if (!m.all_finite()) {
        throw NumericalError("svd: input contains non-finite values");
    }
    if (m.rows() >= m.cols()) {
        return svd_tall(m);
    }
    SvdResult t = svd_tall(m.transposed());
    return SvdResult{t.vt.transposed(), std::move(t.sigma), t.u.transposed()};
}

EighResult eigh_symmetric(const Matrix& s) {
    if (s.rows() != s.cols()) {
        std::ostringstream msg;
        msg << "eigh_symmetric: matrix is " << s.rows() << "x" << s.cols() << ", not square";
        throw DataError(msg.str());
    }
    if (!s.all_finite()) {
        throw NumericalError("eigh_symmetric: input contains non-finite values");
    }
    const std::size_t n = s.rows();
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            a(i, j) = 0.5 * (s(i, j) + s(j, i));
        }
    }
    Matrix v_rows = Matrix::identity(n);
    const double abs_floor = 1e-300 + 1e-18 * a.frobenius_norm();

    bool converged = false;
    for (int sweep = 0; sweep < kMaxJacobiSweeps; ++sweep) {
        std::size_t rotations = 0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= kEps * std::sqrt(std::abs(a(p, p) * a(q, q))) ||
                    std::abs(apq) <= abs_floor) {
                    continue;
                }
                const double t = jacobi_tangent((a(q, q) - a(p, p)) / (2.0 * apq));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = c * t;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                rotate(a.row(p), a.row(q), c, sn);
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                rotate(v_rows.row(p), v_rows.row(q), c, sn);
                ++rotations;
            }
        }
        if (rotations == 0) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "eigh_symmetric: cyclic Jacobi did not converge within " << kMaxJacobiSweeps
            << " sweeps on a " << n << "x" << n << " matrix";
        throw NumericalError(msg.str());
    }

    Vector diag(n);
    for (std::size_t i = 0; i < n; ++i) {
        diag[i] = a(i, i);
    }
    const auto order = descending_order(diag);
    EighResult out;
    out.eigenvalues.resize(n);
    out.eigenvectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.eigenvalues[k] = diag[order[k]];
        const auto vec = v_rows.row(order[k]);
        for (std::size_t i = 0; i < n; ++i) {
            out.eigenvectors(i, k) = vec[i];
        }
    }
    return out;
}

GramAccumulator::GramAccumulator(std::size_t dim_out, std::size_t dim_in)
    : gram_(dim_out, dim_out), input_sum_(dim_in, 0.0) {}

GramAccumulator GramAccumulator::from_parts(Matrix gram, Vector input_sum, uint64_t sample_count) {
    if (gram.rows() != gram.cols()) {
        throw DataError("GramAccumulator: gram matrix must be square");
    }
    GramAccumulator acc;
    acc.gram_ = std::move(gram);
    acc.input_sum_ = std::move(input_sum);
    acc.sample_count_ = sample_count;
    return acc;
}

void GramAccumulator::accumulate(const Matrix& x_batch, const Matrix& y_batch) {
    if (y_batch.rows() != dim_out() || x_batch.rows() != dim_in() ||
        x_batch.cols() != y_batch.cols()) {
        std::ostringstream msg;
        msg << "GramAccumulator::accumulate: expected x " << dim_in() << "xT and y " << dim_out()
            << "xT, got x " << x_batch.rows() << "x" << x_batch.cols() << " and y "
            << y_batch.rows() << "x" << y_batch.cols();
        throw DataError(msg.str());
    }
    const std::size_t n = dim_out();
    for (std::size_t i = 0; i < n; ++i) {
        const auto yi = y_batch.row(i);
        for (std::size_t j = i; j < n; ++j) {
            gram_(i, j) += dot(yi, y_batch.row(j));
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            gram_(j, i) = gram_(i, j);
        }
    }
    for (std::size_t k = 0; k < dim_in(); ++k) {
        const auto xk = x_batch.row(k);
        input_sum_[k] += std::accumulate(xk.begin(), xk.end(), 0.0);
    }
    sample_count_ += y_batch.cols();
}

void GramAccumulator::merge(const GramAccumulator& other) {
    if (other.dim_out() != dim_out() || other.dim_in() != dim_in()) {
        throw DataError("GramAccumulator::merge: dimension mismatch");
    }
    auto dst = gram_.data();
    const auto src = other.gram_.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
    for (std::size_t k = 0; k < input_sum_.size(); ++k) {
        input_sum_[k] += other.input_sum_[k];
    }
    sample_count_ += other.sample_count_;
}

Vector GramAccumulator::input_mean() const {
    if (sample_count_ == 0) {
        throw DataError("GramAccumulator: no samples accumulated");
    }
    Vector mean = input_sum_;
    for (double& x : mean) {
        x /= static_cast<double>(sample_count_);
    }
    return mean;
}

} // namespace lrc
