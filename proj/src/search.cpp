// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrc/search.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "lrc/errors.hpp"
#include "lrc/parallel.hpp"

namespace lrc {

namespace {

constexpr std::size_t kGramChunks = 8;

constexpr std::array<LayerKind, 7> kReverseKinds = {
    LayerKind::d, LayerKind::u, LayerKind::g, LayerKind::o,
    LayerKind::v, LayerKind::k, LayerKind::q};

const Matrix& dense_weight(const DecoderModel& model, const LayerId& id) {
    const auto* dense = std::get_if<DenseLayer>(&model.layer(id));
    if (dense == nullptr) {
        throw DataError("layer " + id.name() + " is already factored");
    }
    return dense->weight;
}

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

} // namespace

GramBank build_gram_bank(const DecoderModel& model, const CalibrationSet& calibration,
                         std::span<const LayerId> layers) {
    const std::set<LayerId> wanted(layers.begin(), layers.end());
    auto empty_bank = [&] {
        GramBank bank;
        for (const LayerId& id : wanted) {
            const LayerShape s = shape_of(model.layer(id));
            bank.emplace(id, GramAccumulator(s.d_out, s.d_in));
        }
        return bank;
    };

    const std::size_t n = calibration.samples.size();
    const std::size_t chunks = std::max<std::size_t>(1, std::min(kGramChunks, n));
    std::vector<GramBank> partial(chunks);
    parallel_for(chunks, [&](std::size_t c) {
        GramBank bank = empty_bank();
        const std::size_t begin = c * n / chunks;
        const std::size_t end = (c + 1) * n / chunks;
        for (std::size_t s = begin; s < end; ++s) {
            model.forward(calibration.samples[s].tokens,
                          [&](const LayerId& id, const Matrix& x, const Matrix& y) {
                              if (auto it = bank.find(id); it != bank.end()) {
                                  it->second.accumulate(x, y);
                              }
                          });
        }
        partial[c] = std::move(bank);
    });

    GramBank out = empty_bank();
    for (const GramBank& bank : partial) {
        for (auto& [id, acc] : out) {
            acc.merge(bank.at(id));
        }
    }
    return out;
}

GramBank refresh_gram(const DecoderModel& model, const CalibrationSet& calibration,
                      std::span<const LayerId> layers) {
    return build_gram_bank(model, calibration, layers);
}

std::vector<LayerId> default_search_order(std::size_t n_modules) {
    std::vector<LayerId> order;
    order.reserve(n_modules * kReverseKinds.size());
    for (std::size_t m = n_modules; m-- > 0;) {
        for (const LayerKind kind : kReverseKinds) {
            order.push_back({m, kind});
        }
    }
    return order;
}

void SearchPolicy::validate() const {
    if (beta_grid.empty()) {
        throw ConfigError("search policy: empty beta grid");
    }
    for (std::size_t i = 0; i < beta_grid.size(); ++i) {
        if (!(beta_grid[i] > 0.0 && beta_grid[i] < 1.0)) {
            throw ConfigError("search policy: beta grid values must lie in (0, 1)");
        }
        if (i > 0 && !(beta_grid[i] > beta_grid[i - 1])) {
            throw ConfigError("search policy: beta grid must be strictly ascending");
        }
    }
    if (!(tau >= 0.0)) {
        throw ConfigError("search policy: tau must be >= 0");
    }
}

bool gate_passes(const MetricValue& candidate, const MetricValue& reference, double tau) {
    if (!std::isfinite(candidate.value)) {
        return false;
    }
    if (reference.direction == Direction::higher_better) {
        return candidate.value >= reference.value * (1.0 - tau);
    }
    return candidate.value <= reference.value * (1.0 + tau);
}

Evaluator accuracy_evaluator(SearchPart<ChoiceItem> part, ScoringOptions options) {
    if (part.items.empty()) {
        throw DataError("accuracy_evaluator: search split is empty");
    }
    return [items = std::move(part.items), options](const DecoderModel& model) {
        return choice_accuracy(model, items, options);
    };
}

Evaluator perplexity_evaluator(SearchPart<Document> part) {
    if (part.items.empty()) {
        throw DataError("perplexity_evaluator: search split is empty");
    }
    return [docs = std::move(part.items)](const DecoderModel& model) { return perplexity(model, docs); };
}

SearchResult surgical_search(DecoderModel model, const SearchPolicy& policy, GramBank& gram_bank,
                             const Evaluator& evaluate, const CalibrationSet* calibration) {
    policy.validate();
    if (policy.refresh_every_module && calibration == nullptr) {
        throw ConfigError("surgical_search: refresh_every_module needs a calibration set");
    }
    const std::vector<LayerId> order =
        policy.order.empty() ? default_search_order(model.config().n_layers) : policy.order;

    SearchResult result;
    result.plan.mode = policy.mode;

    auto run_metric = [&](const DecoderModel& m) {
        try {
            ++result.evaluations;
            return evaluate(m);
        } catch (const std::exception& e) {
            throw SearchAborted(std::string("metric evaluation failed: ") + e.what(), result.plan);
        }
    };

    const MetricValue reference = run_metric(model);
    result.plan.reference = reference;
    MetricValue current = reference;

    std::optional<std::size_t> refreshed_module;
    for (const LayerId& id : order) {
        if (policy.refresh_every_module && policy.mode == DecompositionMode::feature &&
            refreshed_module != id.module_index) {
            std::vector<LayerId> module_layers;
            for (const LayerId& other : order) {
                if (other.module_index == id.module_index) {
                    module_layers.push_back(other);
                }
            }
            for (auto& [lid, acc] : refresh_gram(model, *calibration, module_layers)) {
                gram_bank.insert_or_assign(lid, std::move(acc));
            }
            refreshed_module = id.module_index;
        }

        (void)dense_weight(model, id);
        const LinearLayer original = model.layer(id);
        // `original` owns the weight; the model slot is overwritten below.
        const Matrix& w = std::get<DenseLayer>(original).weight;
        const LayerShape shape = shape_of(original);

        std::optional<FeatureBasis> basis;
        if (policy.mode == DecompositionMode::feature) {
            const auto it = gram_bank.find(id);
            if (it == gram_bank.end()) {
                throw SearchAborted("no calibration statistics for " + id.name(), result.plan);
            }
            basis = prepare_feature_basis(w, it->second);
        }

        PlanEntry entry{id, std::nullopt, std::nullopt, std::nullopt};
        std::optional<std::size_t> last_failed_rank;
        for (const double beta : policy.beta_grid) {
            const std::size_t rank = rank_for_budget(shape.d_out, shape.d_in, Budget(beta)).rank;
            if (rank == last_failed_rank) {
                continue; // identical candidate already failed
            }
            FactoredLayer candidate =
                basis ? factor_from_basis(w, *basis, rank) : decompose_weight(w, rank);
            model.set_layer(id, std::move(candidate));
            const MetricValue value = run_metric(model);
            if (gate_passes(value, reference, policy.tau)) {
                entry.beta = beta;
                entry.rank = rank;
                entry.metric_at_accept = value.value;
                current = value;
                break;
            }
            last_failed_rank = rank;
        }
        if (entry.intact()) {
            model.set_layer(id, original);
        }
        result.plan.entries.push_back(entry);
    }

    result.final_metric = current;
    result.model = std::move(model);
    return result;
}

RankPlan constant_budget_plan(const ModelConfig& config, std::size_t last_modules, Budget budget,
                              DecompositionMode mode) {
    if (last_modules > config.n_layers) {
        throw ConfigError("constant budget: last_modules (" + std::to_string(last_modules) +
                          ") exceeds n_layers (" + std::to_string(config.n_layers) + ")");
    }
    RankPlan plan;
    plan.mode = mode;
    for (const LayerId& id : default_search_order(config.n_layers)) {
        if (id.module_index + last_modules < config.n_layers) {
            continue;
        }
        const LayerShape s = layer_shape(config, id.kind);
        plan.entries.push_back(
            {id, budget.beta(), rank_for_budget(s.d_out, s.d_in, budget).rank, std::nullopt});
    }
    return plan;
}

DecoderModel apply_plan(DecoderModel model, const RankPlan& plan, const GramBank* gram_bank) {
    for (const PlanEntry& e : plan.entries) {
        if (e.intact()) {
            (void)model.layer(e.id);
            continue;
        }
        const Matrix& w = dense_weight(model, e.id);
        FactoredLayer f;
        if (plan.mode == DecompositionMode::feature) {
            if (gram_bank == nullptr || !gram_bank->contains(e.id)) {
                throw DataError("apply_plan: no calibration statistics for " + e.id.name());
            }
            f = decompose_feature(w, gram_bank->at(e.id), *e.rank);
        } else {
            f = decompose_weight(w, *e.rank);
        }
        model.set_layer(e.id, std::move(f));
    }
    return model;
}

std::vector<LayerFootprint> planned_footprints(const ModelConfig& config, const RankPlan& plan) {
    std::vector<LayerFootprint> fps = dense_footprints(config);
    for (const PlanEntry& e : plan.entries) {
        if (e.intact()) {
            continue;
        }
        if (e.id.module_index >= config.n_layers) {
            throw DataError("plan references unknown layer " + e.id.name());
        }
        LayerFootprint& fp = fps[e.id.module_index * kLayerKinds.size() + static_cast<std::size_t>(e.id.kind)];
        fp.rank = *e.rank;
        fp.has_bias = plan.mode == DecompositionMode::feature;
    }
    return fps;
}

std::string plan_to_json(const RankPlan& plan) {
    nlohmann::json entries = nlohmann::json::array();
    for (const PlanEntry& e : plan.entries) {
        entries.push_back({{"module", e.id.module_index},
                           {"kind", std::string(kind_name(e.id.kind))},
                           {"beta", optional_json(e.beta)},
                           {"rank", e.rank ? nlohmann::json(*e.rank) : nlohmann::json(nullptr)},
                           {"metric_at_accept", optional_json(e.metric_at_accept)}});
    }
    nlohmann::json root;
    root["mode"] = std::string(mode_name(plan.mode));
    if (plan.reference) {
        root["reference"] = {{"metric", std::string(metric_name(plan.reference->kind))},
                             {"value", plan.reference->value},
                             {"n_items", plan.reference->n_items}};
    } else {
        root["reference"] = nullptr;
    }
    root["entries"] = std::move(entries);
    return root.dump(2) + "\n";
}

RankPlan plan_from_json(std::string_view text) {
    RankPlan plan;
    try {
        const nlohmann::json root = nlohmann::json::parse(text);
        const nlohmann::json* entries = &root;
        if (root.is_object()) {
            plan.mode = parse_mode(root.value("mode", std::string("feature")));
            if (root.contains("reference") && !root["reference"].is_null()) {
                const auto& ref = root["reference"];
                MetricValue mv;
                mv.kind = parse_metric(ref.at("metric").get<std::string>());
                mv.direction = mv.kind == MetricKind::perplexity ? Direction::lower_better
                                                                 : Direction::higher_better;
                mv.value = ref.at("value").get<double>();
                mv.n_items = ref.value("n_items", std::size_t{0});
                plan.reference = mv;
            }
            entries = &root.at("entries");
        }
        if (!entries->is_array()) {
            throw DataError("rank plan: entries must be an array");
        }
        for (const auto& e : *entries) {
            PlanEntry entry;
            entry.id.module_index = e.at("module").get<std::size_t>();
            entry.id.kind = parse_kind(e.at("kind").get<std::string>());
            if (e.contains("beta") && !e["beta"].is_null()) {
                entry.beta = e["beta"].get<double>();
            }
            if (e.contains("rank") && !e["rank"].is_null()) {
                entry.rank = e["rank"].get<std::size_t>();
                if (*entry.rank == 0) {
                    throw DataError("rank plan: rank must be >= 1 for " + entry.id.name());
                }
            }
            if (e.contains("metric_at_accept") && !e["metric_at_accept"].is_null()) {
                entry.metric_at_accept = e["metric_at_accept"].get<double>();
            }
            plan.entries.push_back(entry);
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("rank plan: ") + e.what());
    }
    return plan;
}

} // namespace lrc
