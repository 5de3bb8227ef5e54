// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "lrc/errors.hpp"
#include "lrc/parallel.hpp"

namespace lrc {

namespace {

// log p(target | row) for one logits row.
double log_prob(std::span<const double> logits, Token target) {
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (const double z : logits) {
        sum += std::exp(z - max_logit);
    }
    return logits[target] - max_logit - std::log(sum);
}

struct Window {
    std::size_t doc;
    std::size_t begin;
    std::size_t length;
};

} // namespace

std::string_view metric_name(MetricKind kind) {
    return kind == MetricKind::perplexity ? "perplexity" : "accuracy";
}

MetricKind parse_metric(std::string_view name) {
    if (name == "perplexity") {
        return MetricKind::perplexity;
    }
    if (name == "accuracy") {
        return MetricKind::accuracy;
    }
    throw ConfigError("unknown metric '" + std::string(name) + "' (expected accuracy or perplexity)");
}

MetricValue perplexity(const DecoderModel& model, std::span<const Document> documents) {
    const std::size_t max_len = model.config().max_seq_len;
    std::vector<Window> windows;
    std::size_t predicted = 0;
    for (std::size_t d = 0; d < documents.size(); ++d) {
        for (std::size_t begin = 0; begin < documents[d].size(); begin += max_len) {
            const std::size_t len = std::min(max_len, documents[d].size() - begin);
            if (len >= 2) {
                windows.push_back({d, begin, len});
                predicted += len - 1;
            }
        }
    }
    if (predicted == 0) {
        throw DataError("perplexity: corpus has no predictable tokens");
    }
    std::vector<double> nll(windows.size(), 0.0);
    parallel_for(windows.size(), [&](std::size_t w) {
        const Window& win = windows[w];
        const auto tokens = std::span<const Token>(documents[win.doc]).subspan(win.begin, win.length);
        const Matrix logits = model.forward(tokens);
        double sum = 0.0;
        for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
            sum -= log_prob(logits.row(t), tokens[t + 1]);
        }
        nll[w] = sum;
    });
    const double mean = pairwise_sum(nll) / static_cast<double>(predicted);
    return {MetricKind::perplexity, std::exp(mean), Direction::lower_better, predicted};
}

std::vector<std::size_t> predict_choices(const DecoderModel& model, std::span<const ChoiceItem> items,
                                         const ScoringOptions& options) {
    const std::size_t max_len = model.config().max_seq_len;
    std::vector<std::size_t> predictions(items.size(), 0);
    parallel_for(items.size(), [&](std::size_t i) {
        const ChoiceItem& item = items[i];
        double best = -INFINITY;
        std::size_t best_choice = 0;
        for (std::size_t c = 0; c < item.choices.size(); ++c) {
            const auto& cont = item.choices[c];
            if (cont.size() >= max_len) {
                throw DataError("predict_choices: continuation of " + std::to_string(cont.size()) +
                                " tokens does not fit max_seq_len " + std::to_string(max_len));
            }
            std::vector<Token> seq = item.context;
            seq.insert(seq.end(), cont.begin(), cont.end());
            const std::size_t drop = seq.size() > max_len ? seq.size() - max_len : 0;
            const std::span<const Token> window = std::span<const Token>(seq).subspan(drop);
            const Matrix logits = model.forward(window);
            const std::size_t first = window.size() - cont.size();
            double score = 0.0;
            for (std::size_t j = 0; j < cont.size(); ++j) {
                score += log_prob(logits.row(first + j - 1), cont[j]);
            }
            if (options.length_normalize) {
                score /= static_cast<double>(cont.size());
            }
            if (score > best) {
                best = score;
                best_choice = c;
            }
        }
        predictions[i] = best_choice;
    });
    return predictions;
}

MetricValue accuracy_of(std::span<const std::size_t> predictions, std::span<const ChoiceItem> items) {
    if (items.empty()) {
        throw DataError("choice_accuracy: empty item list");
    }
    if (predictions.size() != items.size()) {
        throw DataError("choice_accuracy: prediction count differs from item count");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        correct += predictions[i] == items[i].gold ? 1 : 0;
    }
    return {MetricKind::accuracy, static_cast<double>(correct) / static_cast<double>(items.size()),
            Direction::higher_better, items.size()};
}

MetricValue choice_accuracy(const DecoderModel& model, std::span<const ChoiceItem> items,
                            const ScoringOptions& options) {
    if (items.empty()) {
        throw DataError("choice_accuracy: empty item list");
    }
    const auto predictions = predict_choices(model, items, options);
    return accuracy_of(predictions, items);
}

double disagreement(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    if (a.size() != b.size()) {
        throw DataError("disagreement: prediction lists differ in length");
    }
    if (a.empty()) {
        return 0.0;
    }
    std::size_t differ = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        differ += a[i] != b[i] ? 1 : 0;
    }
    return static_cast<double>(differ) / static_cast<double>(a.size());
}

double disagreement(const DecoderModel& a, const DecoderModel& b, std::span<const ChoiceItem> items,
                    const ScoringOptions& options) {
    const auto pa = predict_choices(a, items, options);
    const auto pb = predict_choices(b, items, options);
    return disagreement(pa, pb);
}

BudgetMap budget_map(std::span<const LayerFootprint> before, std::span<const LayerFootprint> after) {
    if (before.size() != after.size()) {
        throw DataError("budget_map: models have different layer counts");
    }
    BudgetMap map;
    for (std::size_t i = 0; i < before.size(); ++i) {
        const LayerFootprint& b = before[i];
        const LayerFootprint& a = after[i];
        if (b.id != a.id || b.shape.d_out != a.shape.d_out || b.shape.d_in != a.shape.d_in) {
            throw DataError("budget_map: layer " + b.id.name() + " differs in identity or shape");
        }
        BudgetEntry e{b.id, b.params(), a.params(), 1.0};
        e.retained_fraction = static_cast<double>(e.current_params) / static_cast<double>(e.original_params);
        map.original_total += e.original_params;
        map.current_total += e.current_params;
        map.entries.push_back(e);
    }
    map.aggregate = map.original_total == 0
                        ? 1.0
                        : static_cast<double>(map.current_total) / static_cast<double>(map.original_total);
    return map;
}

BudgetMap budget_map(const DecoderModel& before, const DecoderModel& after) {
    if (before.config() != after.config()) {
        throw DataError("budget_map: model configurations differ");
    }
    const auto fb = footprints(before);
    const auto fa = footprints(after);
    return budget_map(fb, fa);
}

std::string budget_csv(const BudgetMap& map) {
    std::ostringstream out;
    out << "module_index,kind,retained_fraction\n";
    char buf[64];
    for (const BudgetEntry& e : map.entries) {
        std::snprintf(buf, sizeof(buf), "%.6f", e.retained_fraction);
        out << e.id.module_index << ',' << kind_name(e.id.kind) << ',' << buf << '\n';
    }
    return out.str();
}

} // namespace lrc
