// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Low-rank replacements for a dense layer W (d_out × d_in).
//
// Weight space (data free): truncated SVD, W ≈ (U_r Σ_r)(V_rᵀ). No bias.
//
// Feature space (calibration aware): with the uncentered output Gram
// G = Σ y·yᵀ = V Λ Vᵀ over calibration outputs y = W·x, keep the r
// eigenvectors with the largest eigenvalues,
//     w_down = V_r,  w_up = V_rᵀ W,
// and replace the discarded directions by their calibration mean,
//     bias = (I − V_r V_rᵀ) W x̄,
// which makes the calibration residual zero-mean.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "lrc/linalg.hpp"
#include "lrc/model.hpp"

namespace lrc {

enum class DecompositionMode { weight, feature };

std::string_view mode_name(DecompositionMode mode);
// Throws ConfigError.
DecompositionMode parse_mode(std::string_view name);

// Retained-parameter fraction β ∈ (0, 1].
class Budget {
public:
    // Throws ConfigError outside (0, 1].
    explicit Budget(double beta);
    double beta() const { return beta_; }

private:
    double beta_;
};

struct RankSpec {
    std::size_t rank = 0;
    double kappa = 0.0; // d_out·d_in / (d_out + d_in)
};

// r = max(1, floor(β·κ)).
RankSpec rank_for_budget(std::size_t d_out, std::size_t d_in, Budget budget);

// Throws DataError unless 1 ≤ rank ≤ min(d_out, d_in).
FactoredLayer decompose_weight(const Matrix& w, std::size_t rank);

// Rank-independent part of a feature decomposition; compute once per layer
// and slice for every candidate rank.
struct FeatureBasis {
    EighResult eig;     // of the accumulator's Gram matrix
    Vector mean_output; // W·x̄
    uint64_t sample_count = 0;
};

// Throws DataError when the accumulator is empty or its dimensions do not
// match w. Warns when sample_count < d_out (rank-deficient Gram).
FeatureBasis prepare_feature_basis(const Matrix& w, const GramAccumulator& acc);
// Throws DataError unless 1 ≤ rank ≤ d_out.
FactoredLayer factor_from_basis(const Matrix& w, const FeatureBasis& basis, std::size_t rank);
FactoredLayer decompose_feature(const Matrix& w, const GramAccumulator& acc, std::size_t rank);

struct ApproximationError {
    double value = 0.0;
    // True when ‖Y‖_F == 0 and value is the absolute error ‖Ỹ − Y‖_F.
    bool absolute = false;
};

// ‖Ỹ − Y‖_F / ‖Y‖_F for outputs of both layers on inputs X (d_in × N).
ApproximationError approximation_error(const LinearLayer& original, const LinearLayer& factored,
                                       const Matrix& x);

} // namespace lrc
