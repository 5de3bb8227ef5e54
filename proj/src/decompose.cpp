// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrc/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lrc/errors.hpp"
#include "lrc/log.hpp"

namespace lrc {

std::string_view mode_name(DecompositionMode mode) {
    return mode == DecompositionMode::weight ? "weight" : "feature";
}

DecompositionMode parse_mode(std::string_view name) {
    if (name == "weight") {
        return DecompositionMode::weight;
    }
    if (name == "feature") {
        return DecompositionMode::feature;
    }
    throw ConfigError("unknown decomposition mode '" + std::string(name) +
                      "' (expected weight or feature)");
}

Budget::Budget(double beta) : beta_(beta) {
    if (!(beta > 0.0 && beta <= 1.0)) {
        throw ConfigError("budget beta must lie in (0, 1], got " + std::to_string(beta));
    }
}

RankSpec rank_for_budget(std::size_t d_out, std::size_t d_in, Budget budget) {
    if (d_out == 0 || d_in == 0) {
        throw DataError("rank_for_budget: layer dimensions must be >= 1");
    }
    RankSpec spec;
    const double d2 = static_cast<double>(d_out);
    const double d1 = static_cast<double>(d_in);
    spec.kappa = d2 * d1 / (d2 + d1);
    // The 1e-9 guard keeps exact products such as 0.5·2048 from flooring
    // one below due to representation error in β.
    const double raw = std::floor(budget.beta() * spec.kappa + 1e-9);
    spec.rank = std::max<std::size_t>(1, static_cast<std::size_t>(raw));
    return spec;
}

FactoredLayer decompose_weight(const Matrix& w, std::size_t rank) {
    const std::size_t max_rank = std::min(w.rows(), w.cols());
    if (rank < 1 || rank > max_rank) {
        throw DataError("decompose_weight: rank " + std::to_string(rank) + " outside [1, " +
                        std::to_string(max_rank) + "]");
    }
    const SvdResult s = svd(w);
    FactoredLayer f;
    f.w_down = leading_columns(s.u, rank);
    for (std::size_t i = 0; i < f.w_down.rows(); ++i) {
        for (std::size_t k = 0; k < rank; ++k) {
            f.w_down(i, k) *= s.sigma[k];
        }
    }
    f.w_up = leading_rows(s.vt, rank);
    return f;
}

FeatureBasis prepare_feature_basis(const Matrix& w, const GramAccumulator& acc) {
    if (acc.sample_count() == 0) {
        throw DataError("decompose_feature: accumulator holds no samples");
    }
    if (acc.dim_out() != w.rows() || acc.dim_in() != w.cols()) {
        throw DataError("decompose_feature: accumulator is " + std::to_string(acc.dim_out()) +
                        " out / " + std::to_string(acc.dim_in()) + " in, weight is " +
                        std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
    }
    if (acc.sample_count() < w.rows()) {
        warn("decompose_feature: " + std::to_string(acc.sample_count()) +
             " calibration samples for a " + std::to_string(w.rows()) +
             "-dimensional output; Gram matrix is rank deficient");
    }
    FeatureBasis basis;
    basis.eig = eigh_symmetric(acc.gram());
    basis.mean_output = matvec(w, acc.input_mean());
    basis.sample_count = acc.sample_count();
    return basis;
}

FactoredLayer factor_from_basis(const Matrix& w, const FeatureBasis& basis, std::size_t rank) {
    const std::size_t d_out = w.rows();
    if (rank < 1 || rank > d_out) {
        throw DataError("decompose_feature: rank " + std::to_string(rank) + " outside [1, " +
                        std::to_string(d_out) + "]");
    }
    FactoredLayer f;
    f.w_down = leading_columns(basis.eig.eigenvectors, rank);
    f.w_up = matmul_tn(f.w_down, w);

    // (I − V_r V_rᵀ)·W·x̄ without forming the complement basis.
    const Matrix& vr = f.w_down;
    Vector coeff(rank, 0.0);
    for (std::size_t i = 0; i < d_out; ++i) {
        for (std::size_t k = 0; k < rank; ++k) {
            coeff[k] += vr(i, k) * basis.mean_output[i];
        }
    }
    Vector bias = basis.mean_output;
    for (std::size_t i = 0; i < d_out; ++i) {
        double proj = 0.0;
        for (std::size_t k = 0; k < rank; ++k) {
            proj += vr(i, k) * coeff[k];
        }
        bias[i] -= proj;
    }
    f.bias = std::move(bias);
    return f;
}

FactoredLayer decompose_feature(const Matrix& w, const GramAccumulator& acc, std::size_t rank) {
    if (rank > w.rows()) {
        throw DataError("decompose_feature: rank " + std::to_string(rank) +
                        " exceeds output dimension " + std::to_string(w.rows()));
    }
    return factor_from_basis(w, prepare_feature_basis(w, acc), rank);
}

ApproximationError approximation_error(const LinearLayer& original, const LinearLayer& factored,
                                       const Matrix& x) {
    const LayerShape a = shape_of(original);
    const LayerShape b = shape_of(factored);
    if (a.d_out != b.d_out || a.d_in != b.d_in || x.rows() != a.d_in) {
        throw DataError("approximation_error: inconsistent shapes");
    }
    const Matrix y = apply_layer(original, x);
    const Matrix y_hat = apply_layer(factored, x);
    const double diff = frobenius_distance(y_hat, y);
    const double norm = y.frobenius_norm();
    if (norm == 0.0) {
        return {diff, true};
    }
    return {diff / norm, false};
}

} // namespace lrc
