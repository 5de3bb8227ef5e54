// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lrc/errors.hpp"
#include "lrc/linalg.hpp"
#include "lrc/parallel.hpp"
#include "lrc/rng.hpp"
#include "oracles.hpp"

using lrc::Matrix;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) {
    REQUIRE(a.rows() == b.rows());
    REQUIRE(a.cols() == b.cols());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    }
    return m;
}

Matrix gram_of_columns(const Matrix& m) { return oracle::naive_matmul(m.transposed(), m); }

Matrix gram_of_rows(const Matrix& m) { return oracle::naive_matmul(m, m.transposed()); }

Matrix reconstruct(const lrc::SvdResult& s, std::size_t rows, std::size_t cols) {
    Matrix us(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t k = 0; k < s.sigma.size(); ++k) {
            us(i, k) = s.u(i, k) * s.sigma[k];
        }
    }
    return oracle::naive_matmul(us, s.vt);
}

Matrix symmetric_random(lrc::SplitMix64& rng, std::size_t n) {
    Matrix a = oracle::random_matrix(rng, n, n);
    Matrix s(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            s(i, j) = 0.5 * (a(i, j) + a(j, i));
        }
    }
    return s;
}

} // namespace

TEST_CASE("splitmix64 and fnv1a match published reference values") {
    lrc::SplitMix64 rng(0);
    CHECK(rng.next() == 0xE220A8397B1DCDAFULL);
    CHECK(rng.next() == 0x6E789E6AA1B965F4ULL);
    CHECK(rng.next() == 0x06C45D188009454FULL);
    CHECK(lrc::fnv1a64("") == 0xCBF29CE484222325ULL);
    CHECK(lrc::fnv1a64("a") == 0xAF63DC4C8601EC8CULL);
    CHECK(lrc::fnv1a64("foobar") == 0x85944171F73967E8ULL);
    CHECK(lrc::derive_seed(7, "split") != lrc::derive_seed(7, "calibration"));
    CHECK(lrc::derive_seed(7, "split") == lrc::derive_seed(7, "split"));
}

TEST_CASE("uniform and normal draws have plausible moments") {
    lrc::SplitMix64 rng(42);
    double sum = 0.0;
    double sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sq / n - 1.0) < 0.02);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("parallel_for visits every index once and rethrows") {
    std::vector<int> hits(1000, 0);
    lrc::parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; }, 4);
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    CHECK_THROWS_AS(lrc::parallel_for(
                        100, [](std::size_t i) {
                            if (i == 63) {
                                throw std::runtime_error("boom");
                            }
                        },
                        4),
                    std::runtime_error);
    lrc::parallel_for(0, [](std::size_t) { FAIL("called for empty range"); });
}

TEST_CASE("pairwise_sum is exact on integers and stable on many small terms") {
    std::vector<double> v(1000);
    std::iota(v.begin(), v.end(), 1.0);
    CHECK(lrc::pairwise_sum(v) == 500500.0);
    std::vector<double> tiny(1 << 20, 0.1);
    CHECK(lrc::pairwise_sum(tiny) == doctest::Approx(104857.6).epsilon(1e-13));
    CHECK(lrc::pairwise_sum(std::vector<double>{}) == 0.0);
}

TEST_CASE("matrix construction and shape errors") {
    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), lrc::DataError);
    CHECK_THROWS_AS(Matrix::from_rows({{1, 2}, {3}}), lrc::DataError);
    const Matrix a = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
    CHECK(a(1, 2) == 6.0);
    CHECK(a.transposed()(2, 1) == 6.0);
    CHECK(a.column(1) == lrc::Vector{2, 5});
    CHECK(a.frobenius_norm() == doctest::Approx(std::sqrt(91.0)));
    CHECK(Matrix::identity(3).trace() == 3.0);
    CHECK_THROWS_AS(lrc::matmul(a, a), lrc::DataError);
    CHECK_THROWS_AS(lrc::subtract(a, a.transposed()), lrc::DataError);
    CHECK_THROWS_AS(lrc::matvec(a, std::vector<double>{1.0}), lrc::DataError);
    CHECK_THROWS_AS(lrc::leading_columns(a, 4), lrc::DataError);
}

TEST_CASE("matmul, matmul_tn and matvec agree with naive loops") {
    lrc::SplitMix64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.below(9);
        const std::size_t k = 1 + rng.below(9);
        const std::size_t n = 1 + rng.below(9);
        const Matrix a = oracle::random_matrix(rng, m, k);
        const Matrix b = oracle::random_matrix(rng, k, n);
        CHECK(max_abs_diff(lrc::matmul(a, b), oracle::naive_matmul(a, b)) < 1e-12);
        const Matrix c = oracle::random_matrix(rng, m, n);
        CHECK(max_abs_diff(lrc::matmul_tn(a, c), oracle::naive_matmul(a.transposed(), c)) < 1e-12);
        const lrc::Vector x = b.column(0);
        const lrc::Vector y = lrc::matvec(a, x);
        const Matrix y_ref = oracle::naive_matmul(a, leading_columns(b, 1));
        for (std::size_t i = 0; i < m; ++i) {
            CHECK(y[i] == doctest::Approx(y_ref(i, 0)).epsilon(1e-12));
        }
    }
}

TEST_CASE("svd of a worked 2x2 example") {
    // AᵀA = [[25, 20], [20, 25]] has eigenvalues 45 and 5.
    const Matrix a = Matrix::from_rows({{3, 0}, {4, 5}});
    const lrc::SvdResult s = lrc::svd(a);
    CHECK(s.sigma[0] == doctest::Approx(3.0 * std::sqrt(5.0)).epsilon(1e-14));
    CHECK(s.sigma[1] == doctest::Approx(std::sqrt(5.0)).epsilon(1e-14));
    CHECK(max_abs_diff(reconstruct(s, 2, 2), a) < 1e-14);
}

TEST_CASE("svd factors are orthonormal, ordered and reconstruct the input") {
    lrc::SplitMix64 rng(2);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t rows = 1 + rng.below(12);
        const std::size_t cols = 1 + rng.below(12);
        const Matrix a = oracle::random_matrix(rng, rows, cols);
        const lrc::SvdResult s = lrc::svd(a);
        REQUIRE(s.u.rows() == rows);
        REQUIRE(s.u.cols() == rows);
        REQUIRE(s.vt.rows() == cols);
        REQUIRE(s.vt.cols() == cols);
        REQUIRE(s.sigma.size() == std::min(rows, cols));
        CHECK(max_abs_diff(gram_of_columns(s.u), Matrix::identity(rows)) < 1e-12);
        CHECK(max_abs_diff(gram_of_rows(s.vt), Matrix::identity(cols)) < 1e-12);
        CHECK(std::is_sorted(s.sigma.rbegin(), s.sigma.rend()));
        CHECK(max_abs_diff(reconstruct(s, rows, cols), a) < 1e-12);

        const oracle::Vec ref = oracle::singular_values(a);
        for (std::size_t k = 0; k < s.sigma.size(); ++k) {
            CHECK(std::abs(s.sigma[k] - ref[k]) < 1e-7 * std::max(1.0, s.sigma[0]));
        }
    }
}

TEST_CASE("svd completes bases for rank-deficient and zero input") {
    lrc::SplitMix64 rng(3);
    const Matrix left = oracle::random_matrix(rng, 7, 2);
    const Matrix right = oracle::random_matrix(rng, 2, 5);
    const Matrix low = lrc::matmul(left, right);
    const lrc::SvdResult s = lrc::svd(low);
    CHECK(max_abs_diff(gram_of_columns(s.u), Matrix::identity(7)) < 1e-12);
    CHECK(max_abs_diff(gram_of_rows(s.vt), Matrix::identity(5)) < 1e-12);
    CHECK(s.sigma[2] < 1e-12 * s.sigma[0]);
    CHECK(max_abs_diff(reconstruct(s, 7, 5), low) < 1e-12);

    const lrc::SvdResult z = lrc::svd(Matrix(3, 4));
    CHECK(max_abs_diff(gram_of_columns(z.u), Matrix::identity(3)) < 1e-14);
    CHECK(max_abs_diff(gram_of_rows(z.vt), Matrix::identity(4)) < 1e-14);
    for (const double sv : z.sigma) {
        CHECK(sv == 0.0);
    }
}

TEST_CASE("svd rejects non-finite input") {
    Matrix a(2, 2, 1.0);
    a(0, 1) = std::nan("");
    CHECK_THROWS_AS(lrc::svd(a), lrc::NumericalError);
    a(0, 1) = INFINITY;
    CHECK_THROWS_AS(lrc::svd(a), lrc::NumericalError);
}

TEST_CASE("eigh_symmetric matches the bisection oracle and diagonalizes") {
    lrc::SplitMix64 rng(4);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 1 + rng.below(14);
        const Matrix s = symmetric_random(rng, n);
        const lrc::EighResult e = lrc::eigh_symmetric(s);
        CHECK(std::is_sorted(e.eigenvalues.rbegin(), e.eigenvalues.rend()));
        CHECK(max_abs_diff(gram_of_columns(e.eigenvectors), Matrix::identity(n)) < 1e-12);
        const Matrix av = oracle::naive_matmul(s, e.eigenvectors);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < n; ++k) {
                CHECK(std::abs(av(i, k) - e.eigenvalues[k] * e.eigenvectors(i, k)) < 1e-11);
            }
        }
        const oracle::Vec ref = oracle::eigenvalues_bisection(s);
        for (std::size_t k = 0; k < n; ++k) {
            CHECK(std::abs(e.eigenvalues[k] - ref[k]) < 1e-10);
        }
    }
}

TEST_CASE("eigh_symmetric handles repeated eigenvalues and PSD Gram matrices") {
    const lrc::EighResult id = lrc::eigh_symmetric(Matrix::identity(5));
    for (const double v : id.eigenvalues) {
        CHECK(v == 1.0);
    }
    CHECK(max_abs_diff(id.eigenvectors, Matrix::identity(5)) == 0.0);

    lrc::SplitMix64 rng(5);
    const Matrix y = oracle::random_matrix(rng, 9, 4); // rank-4 Gram in 9 dims
    const Matrix g = gram_of_rows(y);
    const lrc::EighResult e = lrc::eigh_symmetric(g);
    for (std::size_t k = 4; k < 9; ++k) {
        CHECK(std::abs(e.eigenvalues[k]) < 1e-12 * e.eigenvalues[0]);
    }
    CHECK(max_abs_diff(gram_of_columns(e.eigenvectors), Matrix::identity(9)) < 1e-12);
}

TEST_CASE("eigh_symmetric input validation") {
    CHECK_THROWS_AS(lrc::eigh_symmetric(Matrix(2, 3)), lrc::DataError);
    Matrix bad = Matrix::identity(2);
    bad(1, 1) = std::nan("");
    CHECK_THROWS_AS(lrc::eigh_symmetric(bad), lrc::NumericalError);
}

TEST_CASE("gram accumulator equals Y·Yᵀ and merges associatively") {
    lrc::SplitMix64 rng(6);
    const Matrix x1 = oracle::random_matrix(rng, 3, 5);
    const Matrix y1 = oracle::random_matrix(rng, 4, 5);
    const Matrix x2 = oracle::random_matrix(rng, 3, 7);
    const Matrix y2 = oracle::random_matrix(rng, 4, 7);

    lrc::GramAccumulator whole(4, 3);
    whole.accumulate(x1, y1);
    whole.accumulate(x2, y2);
    lrc::GramAccumulator a(4, 3);
    lrc::GramAccumulator b(4, 3);
    a.accumulate(x1, y1);
    b.accumulate(x2, y2);
    a.merge(b);

    Matrix ref = gram_of_rows(y1);
    const Matrix g2 = gram_of_rows(y2);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        ref.data()[i] += g2.data()[i];
    }
    CHECK(max_abs_diff(whole.gram(), ref) < 1e-12);
    CHECK(max_abs_diff(a.gram(), whole.gram()) < 1e-12);
    CHECK(whole.sample_count() == 12);
    CHECK(a.sample_count() == 12);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(whole.gram()(i, j) == whole.gram()(j, i));
        }
    }
    const lrc::Vector mean = whole.input_mean();
    for (std::size_t i = 0; i < 3; ++i) {
        double s = 0.0;
        for (std::size_t t = 0; t < 5; ++t) {
            s += x1(i, t);
        }
        for (std::size_t t = 0; t < 7; ++t) {
            s += x2(i, t);
        }
        CHECK(mean[i] == doctest::Approx(s / 12.0).epsilon(1e-12));
    }
}

TEST_CASE("gram accumulator rejects mismatched shapes and empty means") {
    lrc::GramAccumulator acc(2, 3);
    CHECK_THROWS_AS(acc.accumulate(Matrix(3, 4), Matrix(2, 5)), lrc::DataError);
    CHECK_THROWS_AS(acc.accumulate(Matrix(2, 4), Matrix(2, 4)), lrc::DataError);
    CHECK_THROWS_AS(acc.input_mean(), lrc::DataError);
    lrc::GramAccumulator other(3, 3);
    CHECK_THROWS_AS(acc.merge(other), lrc::DataError);
    CHECK_THROWS_AS(lrc::GramAccumulator::from_parts(Matrix(2, 3), lrc::Vector(3), 1), lrc::DataError);
}
