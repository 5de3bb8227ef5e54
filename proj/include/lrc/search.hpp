// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Surgical rank search: visit layers from the last module to the first and,
// for each, try budgets in ascending order. A candidate decomposition is
// written into the model immediately; the first budget whose model still
// passes the performance gate is kept, otherwise the layer is restored.
//
// Within a module layers are visited d, u, g, o, v, k, q (reverse dataflow).
//
// Gate against the reference P measured once on the intact model:
//   higher-better metric: accept iff value ≥ P·(1 − τ)
//   lower-better metric:  accept iff value ≤ P·(1 + τ)

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lrc/calib.hpp"
#include "lrc/decompose.hpp"
#include "lrc/eval.hpp"
#include "lrc/model.hpp"

namespace lrc {

using GramBank = std::map<LayerId, GramAccumulator>;

// Streams every calibration sample through the model and accumulates one
// Gram matrix per requested layer. Work is cut into a fixed number of
// sample chunks merged in chunk order, so results do not depend on the
// machine's thread count.
GramBank build_gram_bank(const DecoderModel& model, const CalibrationSet& calibration,
                         std::span<const LayerId> layers);
// Rebuilds accumulators from the current (possibly partially decomposed)
// model.
GramBank refresh_gram(const DecoderModel& model, const CalibrationSet& calibration,
                      std::span<const LayerId> layers);

std::vector<LayerId> default_search_order(std::size_t n_modules);

struct SearchPolicy {
    std::vector<double> beta_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    double tau = 0.0;
    std::vector<LayerId> order; // empty: default_search_order
    // Rebuild the current module's accumulators from the partially
    // compressed model before visiting it. Needs a calibration set.
    bool refresh_every_module = false;
    DecompositionMode mode = DecompositionMode::feature;

    // Throws ConfigError.
    void validate() const;
};

bool gate_passes(const MetricValue& candidate, const MetricValue& reference, double tau);

using Evaluator = std::function<MetricValue(const DecoderModel&)>;

Evaluator accuracy_evaluator(SearchPart<ChoiceItem> part, ScoringOptions options = {});
Evaluator perplexity_evaluator(SearchPart<Document> part);

struct PlanEntry {
    LayerId id;
    std::optional<double> beta; // unset: layer kept intact
    std::optional<std::size_t> rank;
    std::optional<double> metric_at_accept;

    bool intact() const { return !rank.has_value(); }
};

struct RankPlan {
    DecompositionMode mode = DecompositionMode::feature;
    std::optional<MetricValue> reference;
    std::vector<PlanEntry> entries; // traversal order
};

class SearchAborted : public std::runtime_error {
public:
    SearchAborted(const std::string& what, RankPlan partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}
    const RankPlan& partial_plan() const { return partial_; }

private:
    RankPlan partial_;
};

struct SearchResult {
    DecoderModel model;
    RankPlan plan;
    MetricValue final_metric;
    std::size_t evaluations = 0;
};

// Throws SearchAborted (carrying the plan so far) when evaluation fails.
SearchResult surgical_search(DecoderModel model, const SearchPolicy& policy, GramBank& gram_bank,
                             const Evaluator& evaluate, const CalibrationSet* calibration = nullptr);

// The same β on every layer of the trailing `last_modules` modules, listed in
// search traversal order.
RankPlan constant_budget_plan(const ModelConfig& config, std::size_t last_modules, Budget budget,
                              DecompositionMode mode);

// Re-applies recorded ranks in plan order. Feature mode needs the gram bank
// the plan was produced with. Throws DataError for unknown or already
// factored layers.
DecoderModel apply_plan(DecoderModel model, const RankPlan& plan, const GramBank* gram_bank);

// Footprints after applying `plan` to a dense model of `config`.
std::vector<LayerFootprint> planned_footprints(const ModelConfig& config, const RankPlan& plan);

// JSON: {"mode", "reference", "entries": [{module, kind, beta, rank,
// metric_at_accept}]} with nulls for intact layers. plan_from_json also
// accepts a bare entry array.
std::string plan_to_json(const RankPlan& plan);
RankPlan plan_from_json(std::string_view text);

} // namespace lrc
