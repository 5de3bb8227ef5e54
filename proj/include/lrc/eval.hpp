// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Metrics (perplexity, multiple-choice accuracy, prediction disagreement)
// and parameter-budget accounting for compressed models.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lrc/calib.hpp"
#include "lrc/model.hpp"

namespace lrc {

enum class MetricKind { perplexity, accuracy };
enum class Direction { lower_better, higher_better };

std::string_view metric_name(MetricKind kind);
// Throws ConfigError.
MetricKind parse_metric(std::string_view name);

struct MetricValue {
    MetricKind kind = MetricKind::accuracy;
    double value = 0.0;
    Direction direction = Direction::higher_better;
    std::size_t n_items = 0; // predicted tokens for perplexity, items for accuracy
};

// exp(mean NLL) over teacher-forced next-token predictions, natural log.
// Documents are cut into non-overlapping windows of max_seq_len; the first
// token of each window is context only. Throws DataError when nothing is
// predicted (empty corpus or only single-token windows).
MetricValue perplexity(const DecoderModel& model, std::span<const Document> documents);
inline MetricValue perplexity(const DecoderModel& model, const TextCorpus& corpus) {
    return perplexity(model, corpus.documents);
}

struct ScoringOptions {
    // Score = mean (instead of sum) of continuation token log-likelihoods.
    bool length_normalize = true;
};

// Per item, the argmax choice (lowest index wins ties). Sequences longer than
// max_seq_len keep their trailing max_seq_len tokens.
std::vector<std::size_t> predict_choices(const DecoderModel& model, std::span<const ChoiceItem> items,
                                         const ScoringOptions& options = {});

MetricValue accuracy_of(std::span<const std::size_t> predictions, std::span<const ChoiceItem> items);
// Throws DataError for an empty item list.
MetricValue choice_accuracy(const DecoderModel& model, std::span<const ChoiceItem> items,
                            const ScoringOptions& options = {});

// Fraction of positions where the predictions differ.
double disagreement(std::span<const std::size_t> a, std::span<const std::size_t> b);
double disagreement(const DecoderModel& a, const DecoderModel& b, std::span<const ChoiceItem> items,
                    const ScoringOptions& options = {});

struct BudgetEntry {
    LayerId id;
    uint64_t original_params = 0;
    uint64_t current_params = 0;
    double retained_fraction = 1.0;
};

struct BudgetMap {
    std::vector<BudgetEntry> entries; // module-major, q..d
    uint64_t original_total = 0;
    uint64_t current_total = 0;
    double aggregate = 1.0; // Σ βᵢ pᵢ / Σ pᵢ == current_total / original_total
};

// Throws DataError when the layer lists do not describe the same shapes.
BudgetMap budget_map(std::span<const LayerFootprint> before, std::span<const LayerFootprint> after);
BudgetMap budget_map(const DecoderModel& before, const DecoderModel& after);

// "module_index,kind,retained_fraction" rows, fractions with 6 decimals.
std::string budget_csv(const BudgetMap& map);

} // namespace lrc
