// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrc/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lrc/calib.hpp"
#include "lrc/errors.hpp"
#include "lrc/log.hpp"
#include "lrc/rng.hpp"
#include "lrc/search.hpp"

namespace lrc {

namespace fs = std::filesystem;

namespace {

// Exclusive ownership of an output directory for one command.
class DirectoryLock {
public:
    explicit DirectoryLock(const fs::path& dir) : path_(dir / ".lrc.lock") {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) {
            throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
        }
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) {
            throw ConfigError("output directory " + dir.string() + " is locked by another run (" +
                              path_.string() + ")");
        }
        ::close(fd);
    }
    ~DirectoryLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    fs::path path_;
};

void write_text(const fs::path& path, std::string_view text) { write_binary(path, text); }

std::string read_text(const fs::path& path) { return read_binary(path); }

struct LoadedModel {
    DecoderModel model;
    std::string hash;
    std::string tokenizer;
    DType dtype = DType::f32;
};

LoadedModel load_model(const fs::path& path) {
    if (path.empty()) {
        throw ConfigError("no model bundle configured (set \"bundle\")");
    }
    const std::string bytes = read_binary(path);
    const TensorBundle b = TensorBundle::parse(bytes);
    return {model_from_bundle(b), content_hash(bytes), bundle_tokenizer(b), bundle_dtype(b)};
}

uint64_t split_seed(const RunConfig& c) { return derive_seed(c.require_seed(), "split"); }

std::vector<ChoiceTask> load_tasks(const std::vector<fs::path>& paths, const Tokenizer& tok) {
    std::vector<ChoiceTask> tasks;
    for (const auto& p : paths) {
        tasks.push_back(load_choices(p, tok));
    }
    return tasks;
}

std::vector<TextCorpus> load_corpora(const std::vector<fs::path>& paths, const Tokenizer& tok) {
    std::vector<TextCorpus> out;
    for (const auto& p : paths) {
        out.push_back(load_text(p, tok));
    }
    return out;
}

CalibrationSet build_calibration(const RunConfig& c, const Tokenizer& tok) {
    if (c.calib_text.empty() && c.calib_tasks.empty()) {
        throw ConfigError("no calibration source configured (set calib_text or calib_tasks)");
    }
    std::vector<CalibrationSource> sources;
    for (const TextCorpus& corpus : load_corpora(c.calib_text, tok)) {
        sources.push_back(calibration_source(corpus));
    }
    for (const ChoiceTask& task : load_tasks(c.calib_tasks, tok)) {
        sources.push_back(calibration_source(split_20_80(task, split_seed(c)).search, task.source));
    }
    return make_calibration(sources, c.samples, c.max_len, derive_seed(c.require_seed(), "calibration"));
}

GramBank load_gram_bank(const RunConfig& c, const LoadedModel& lm) {
    if (c.gram_bank.empty()) {
        throw ConfigError("feature mode needs a gram bank (run calibrate, then set gram_bank)");
    }
    const TensorBundle b = load_bundle(c.gram_bank);
    if (config_from_json(b.metadata.at("config")) != lm.model.config()) {
        throw DataError("gram bank " + c.gram_bank.string() + " was built for a different model shape");
    }
    const auto& info = b.metadata.value("calibration", nlohmann::json::object());
    if (info.contains("bundle_hash") && info["bundle_hash"].get<std::string>() != lm.hash) {
        throw DataError("gram bank " + c.gram_bank.string() + " was built from bundle " +
                        info["bundle_hash"].get<std::string>() + ", input bundle is " + lm.hash);
    }
    return gram_bank_from_bundle(b);
}

nlohmann::json metric_json(const MetricValue& m) {
    return {{"metric", std::string(metric_name(m.kind))}, {"value", m.value}, {"n_items", m.n_items}};
}

std::string format_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

nlohmann::json param_json(const ParamReport& p) {
    return {{"linear", p.linear}, {"embeddings", p.embeddings}, {"norms", p.norms}, {"head", p.head},
            {"total", p.total()}};
}

nlohmann::json mac_json(const MacReport& m) {
    return {{"linear", m.linear}, {"attention", m.attention}, {"head", m.head}, {"total", m.total()}};
}

// Pseudo-words from a fixed syllable table.
std::vector<std::string> synth_lexicon(SplitMix64& rng, std::size_t n) {
    static constexpr std::array<std::string_view, 16> kSyllables = {
        "ka", "lo", "mi", "ne", "ru", "ta", "vi", "so", "pe", "du", "ga", "ri", "zo", "fa", "hu", "be"};
    std::vector<std::string> words;
    while (words.size() < n) {
        std::string w;
        const std::size_t len = 1 + rng.below(3);
        for (std::size_t i = 0; i < len; ++i) {
            w += kSyllables[rng.below(kSyllables.size())];
        }
        if (std::find(words.begin(), words.end(), w) == words.end()) {
            words.push_back(std::move(w));
        }
    }
    return words;
}

// Zipf-like draw favouring low indices.
std::size_t zipf_index(SplitMix64& rng, std::size_t n) {
    const double u = rng.uniform();
    return std::min(n - 1, static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(n), u) - 1.0)));
}

std::vector<std::string> synth_sentence(SplitMix64& rng, const std::vector<std::string>& lex) {
    std::vector<std::string> words(4 + rng.below(7));
    for (auto& w : words) {
        w = lex[zipf_index(rng, lex.size())];
    }
    return words;
}

std::string join_words(const std::vector<std::string>& words, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        out += (i == begin ? "" : " ") + words[i];
    }
    return out;
}

template <typename T>
std::vector<T> get_list(const nlohmann::json& v) {
    if (v.is_array()) {
        return v.get<std::vector<T>>();
    }
    return {v.get<T>()};
}

} // namespace

std::string_view strategy_name(Strategy s) {
    switch (s) {
    case Strategy::constant: return "constant";
    case Strategy::search: return "search";
    case Strategy::replay: return "replay";
    }
    return "constant";
}

Strategy parse_strategy(std::string_view name) {
    if (name == "constant") {
        return Strategy::constant;
    }
    if (name == "search") {
        return Strategy::search;
    }
    if (name == "replay") {
        return Strategy::replay;
    }
    throw ConfigError("unknown strategy '" + std::string(name) + "' (constant, search, replay)");
}

namespace {

std::vector<fs::path> get_paths(const nlohmann::json& v) {
    std::vector<fs::path> out;
    for (const auto& s : get_list<std::string>(v)) {
        out.emplace_back(s);
    }
    return out;
}

nlohmann::json path_list_json(const std::vector<fs::path>& paths) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : paths) {
        out.push_back(p.string());
    }
    return out;
}

} // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ConfigError("run config must be a JSON object");
    }
    RunConfig c;
    for (const auto& [key, v] : j.items()) {
        try {
            if (key == "bundle") {
                c.bundle = v.get<std::string>();
            } else if (key == "compare_bundle") {
                c.compare_bundle = v.get<std::string>();
            } else if (key == "gram_bank") {
                c.gram_bank = v.get<std::string>();
            } else if (key == "plan") {
                c.plan = v.get<std::string>();
            } else if (key == "output_dir") {
                c.output_dir = v.get<std::string>();
            } else if (key == "calib_text") {
                c.calib_text = get_paths(v);
            } else if (key == "calib_tasks") {
                c.calib_tasks = get_paths(v);
            } else if (key == "tasks") {
                c.tasks = get_paths(v);
            } else if (key == "eval_text") {
                c.eval_text = get_paths(v);
            } else if (key == "mode") {
                c.mode = parse_mode(v.get<std::string>());
            } else if (key == "bias_compensation") {
                if (!v.is_null()) {
                    c.bias_compensation = v.get<bool>();
                }
            } else if (key == "seed") {
                if (!v.is_null()) {
                    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<int64_t>() < 0)) {
                        throw ConfigError("config key 'seed' must be a non-negative integer");
                    }
                    c.seed = v.get<uint64_t>();
                }
            } else if (key == "samples") {
                c.samples = v.get<std::size_t>();
            } else if (key == "max_len") {
                c.max_len = v.get<std::size_t>();
            } else if (key == "strategy") {
                c.strategy = parse_strategy(v.get<std::string>());
            } else if (key == "beta") {
                c.beta = v.get<double>();
            } else if (key == "last_modules") {
                c.last_modules = v.get<std::size_t>();
            } else if (key == "beta_grid") {
                c.beta_grid = get_list<double>(v);
            } else if (key == "metric") {
                c.metric = parse_metric(v.get<std::string>());
            } else if (key == "tau") {
                c.tau = v.get<double>();
            } else if (key == "refresh_every_module") {
                c.refresh_every_module = v.get<bool>();
            } else if (key == "length_normalize") {
                c.length_normalize = v.get<bool>();
            } else if (key == "dtype") {
                if (!v.is_null()) {
                    try {
                        c.dtype = parse_dtype(v.get<std::string>());
                    } catch (const DataError& e) {
                        throw ConfigError(e.what());
                    }
                }
            } else if (key == "model") {
                if (!v.is_object()) {
                    throw ConfigError("config key 'model' must be an object");
                }
                c.model = v;
            } else if (key == "spectral_decay") {
                c.spectral_decay = v.get<double>();
            } else if (key == "synth_documents") {
                c.synth_documents = v.get<std::size_t>();
            } else if (key == "synth_items") {
                c.synth_items = v.get<std::size_t>();
            } else if (key == "synth_choices") {
                c.synth_choices = v.get<std::size_t>();
            } else {
                throw ConfigError("unknown config key '" + key + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
    }
    c.validate();
    return c;
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["bundle"] = bundle.string();
    j["compare_bundle"] = compare_bundle.string();
    j["gram_bank"] = gram_bank.string();
    j["plan"] = plan.string();
    j["output_dir"] = output_dir.string();
    j["calib_text"] = path_list_json(calib_text);
    j["calib_tasks"] = path_list_json(calib_tasks);
    j["tasks"] = path_list_json(tasks);
    j["eval_text"] = path_list_json(eval_text);
    j["mode"] = std::string(mode_name(mode));
    j["bias_compensation"] = bias_compensation ? nlohmann::json(*bias_compensation) : nlohmann::json(nullptr);
    j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
    j["samples"] = samples;
    j["max_len"] = max_len;
    j["strategy"] = std::string(strategy_name(strategy));
    j["beta"] = beta;
    j["last_modules"] = last_modules;
    j["beta_grid"] = beta_grid;
    j["metric"] = std::string(metric_name(metric));
    j["tau"] = tau;
    j["refresh_every_module"] = refresh_every_module;
    j["length_normalize"] = length_normalize;
    j["dtype"] = dtype ? nlohmann::json(std::string(dtype_name(*dtype))) : nlohmann::json(nullptr);
    j["model"] = model;
    j["spectral_decay"] = spectral_decay;
    j["synth_documents"] = synth_documents;
    j["synth_items"] = synth_items;
    j["synth_choices"] = synth_choices;
    return j;
}

uint64_t RunConfig::require_seed() const {
    if (!seed) {
        throw ConfigError("this command needs an explicit \"seed\"");
    }
    return *seed;
}

void RunConfig::validate() const {
    if (mode == DecompositionMode::weight && bias_compensation.value_or(false)) {
        throw ConfigError("mode=weight forbids bias_compensation");
    }
    if (mode == DecompositionMode::feature && !bias_compensation.value_or(true)) {
        throw ConfigError("mode=feature always applies bias compensation");
    }
    if (samples == 0 || max_len == 0) {
        throw ConfigError("samples and max_len must be >= 1");
    }
    (void)Budget(beta);
    SearchPolicy policy;
    policy.beta_grid = beta_grid;
    policy.tau = tau;
    policy.validate();
    if (synth_choices < 2) {
        throw ConfigError("synth_choices must be >= 2");
    }
}

nlohmann::json merge_overrides(nlohmann::json base, const std::vector<std::string>& overrides) {
    if (base.is_null()) {
        base = nlohmann::json::object();
    }
    for (const std::string& o : overrides) {
        const std::size_t eq = o.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("override '" + o + "' is not key=value");
        }
        const std::string key = o.substr(0, eq);
        const std::string text = o.substr(eq + 1);
        nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
        if (value.is_discarded()) {
            value = text;
        }
        nlohmann::json* node = &base;
        std::size_t start = 0;
        for (std::size_t dot = key.find('.'); dot != std::string::npos; dot = key.find('.', start)) {
            node = &(*node)[key.substr(start, dot - start)];
            if (!node->is_object()) {
                *node = nlohmann::json::object();
            }
            start = dot + 1;
        }
        (*node)[key.substr(start)] = std::move(value);
    }
    return base;
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
    nlohmann::json base = nlohmann::json::object();
    if (!path.empty()) {
        std::string text;
        try {
            text = read_binary(path);
        } catch (const DataError& e) {
            throw ConfigError(e.what());
        }
        base = nlohmann::json::parse(text, nullptr, false);
        if (base.is_discarded()) {
            throw ConfigError("config file " + path.string() + " is not valid JSON");
        }
    }
    return RunConfig::from_json(merge_overrides(std::move(base), overrides));
}

CommandResult cmd_calibrate(const RunConfig& c) {
    const LoadedModel lm = load_model(c.bundle);
    const auto tok = make_tokenizer(lm.tokenizer);
    const CalibrationSet calib = build_calibration(c, *tok);
    if (calib.with_replacement) {
        warn("calibration: a source had fewer sequences than its quota; sampled with replacement");
    }
    const std::vector<LayerId> layers = lm.model.layer_ids();
    const GramBank bank = build_gram_bank(lm.model, calib, layers);

    nlohmann::json sources = nlohmann::json::array();
    for (const auto& p : c.calib_text) {
        sources.push_back({{"kind", "text"}, {"path", p.string()}});
    }
    for (const auto& p : c.calib_tasks) {
        sources.push_back({{"kind", "tasks"}, {"path", p.string()}});
    }
    const nlohmann::json info = {{"bundle_hash", lm.hash},
                                 {"samples", calib.sample_count},
                                 {"max_len", calib.max_len},
                                 {"seed", c.require_seed()},
                                 {"with_replacement", calib.with_replacement},
                                 {"sources", sources}};

    const fs::path out = c.gram_bank.empty() ? c.output_dir / "gram_bank.lrcb" : c.gram_bank;
    const DirectoryLock lock(out.has_parent_path() ? out.parent_path() : fs::path("."));
    const std::string bytes = gram_bank_to_bundle(bank, lm.model.config(), info).serialize();
    write_binary(out, bytes);

    CommandResult r;
    r.outputs.push_back(out);
    r.summary = {{"gram_bank", out.string()},
                 {"layers", bank.size()},
                 {"hash", content_hash(bytes)},
                 {"calibration", info}};
    return r;
}

namespace {

std::vector<ChoiceItem> search_items(const RunConfig& c, const Tokenizer& tok) {
    std::vector<ChoiceItem> items;
    for (const ChoiceTask& task : load_tasks(c.tasks, tok)) {
        auto part = split_20_80(task, split_seed(c)).search;
        items.insert(items.end(), part.items.begin(), part.items.end());
    }
    return items;
}

std::vector<Document> search_documents(const RunConfig& c, const Tokenizer& tok) {
    std::vector<Document> docs;
    for (const TextCorpus& corpus : load_corpora(c.eval_text, tok)) {
        auto part = split_20_80(corpus, split_seed(c)).search;
        docs.insert(docs.end(), part.items.begin(), part.items.end());
    }
    return docs;
}

Evaluator search_evaluator(const RunConfig& c, const Tokenizer& tok) {
    if (c.metric == MetricKind::accuracy) {
        if (c.tasks.empty()) {
            throw ConfigError("search with metric=accuracy needs \"tasks\"");
        }
        SearchPart<ChoiceItem> part;
        part.items = search_items(c, tok);
        return accuracy_evaluator(std::move(part), ScoringOptions{c.length_normalize});
    }
    if (c.eval_text.empty()) {
        throw ConfigError("search with metric=perplexity needs \"eval_text\"");
    }
    SearchPart<Document> part;
    part.items = search_documents(c, tok);
    return perplexity_evaluator(std::move(part));
}

} // namespace

CommandResult cmd_compress(const RunConfig& c) {
    const LoadedModel lm = load_model(c.bundle);
    const auto tok = make_tokenizer(lm.tokenizer);
    const ModelConfig& mc = lm.model.config();

    RankPlan plan;
    if (c.strategy == Strategy::replay) {
        if (c.plan.empty()) {
            throw ConfigError("strategy=replay needs \"plan\"");
        }
        plan = plan_from_json(read_text(c.plan));
        if (plan.mode != c.mode) {
            throw ConfigError("plan was produced in mode " + std::string(mode_name(plan.mode)) +
                              ", config asks for " + std::string(mode_name(c.mode)));
        }
        for (const PlanEntry& e : plan.entries) {
            if (e.id.module_index >= mc.n_layers) {
                throw DataError("plan references layer " + e.id.name() + " absent from the bundle (" +
                                std::to_string(mc.n_layers) + " modules)");
            }
            if (e.rank) {
                const LayerShape s = layer_shape(mc, e.id.kind);
                if (*e.rank == 0 || *e.rank > std::min(s.d_out, s.d_in)) {
                    throw DataError("plan rank " + std::to_string(*e.rank) + " does not fit layer " +
                                    e.id.name());
                }
            }
        }
    }

    GramBank bank;
    if (c.mode == DecompositionMode::feature) {
        bank = load_gram_bank(c, lm);
    }

    std::optional<DecoderModel> compressed;
    nlohmann::json extra = nlohmann::json::object();
    switch (c.strategy) {
    case Strategy::constant: {
        const std::size_t last = c.last_modules == 0 ? mc.n_layers : c.last_modules;
        plan = constant_budget_plan(mc, last, Budget(c.beta), c.mode);
        compressed = apply_plan(lm.model, plan, &bank);
        break;
    }
    case Strategy::replay:
        compressed = apply_plan(lm.model, plan, &bank);
        break;
    case Strategy::search: {
        SearchPolicy policy;
        policy.beta_grid = c.beta_grid;
        policy.tau = c.tau;
        policy.mode = c.mode;
        policy.refresh_every_module = c.refresh_every_module && c.mode == DecompositionMode::feature;
        if (c.last_modules != 0) {
            for (const LayerId& id : default_search_order(mc.n_layers)) {
                if (id.module_index + c.last_modules >= mc.n_layers) {
                    policy.order.push_back(id);
                }
            }
        }
        std::optional<CalibrationSet> calib;
        if (policy.refresh_every_module) {
            calib = build_calibration(c, *tok);
        }
        const Evaluator evaluate = search_evaluator(c, *tok);
        try {
            SearchResult sr = surgical_search(lm.model, policy, bank, evaluate, calib ? &*calib : nullptr);
            plan = std::move(sr.plan);
            compressed = std::move(sr.model);
            extra["final_metric"] = metric_json(sr.final_metric);
            extra["evaluations"] = sr.evaluations;
        } catch (const SearchAborted& e) {
            const DirectoryLock lock(c.output_dir);
            write_text(c.output_dir / "plan.partial.json", plan_to_json(e.partial_plan()));
            throw NumericalError(std::string(e.what()) + " (partial plan in " +
                                 (c.output_dir / "plan.partial.json").string() + ")");
        }
        break;
    }
    }

    const DType dtype = c.dtype.value_or(lm.dtype);
    const std::string bytes = model_to_bundle(*compressed, dtype, lm.tokenizer).serialize();
    const BudgetMap bm = budget_map(lm.model, *compressed);
    const ParamReport before = count_params(lm.model);
    const ParamReport after = count_params(*compressed);

    std::size_t factored = 0;
    for (const PlanEntry& e : plan.entries) {
        factored += e.intact() ? 0 : 1;
    }

    CommandResult r;
    r.summary = {{"strategy", std::string(strategy_name(c.strategy))},
                 {"mode", std::string(mode_name(c.mode))},
                 {"input_hash", lm.hash},
                 {"output_hash", content_hash(bytes)},
                 {"dtype", std::string(dtype_name(dtype))},
                 {"factored_layers", factored},
                 {"params_before", param_json(before)},
                 {"params_after", param_json(after)},
                 {"param_ratio", static_cast<double>(after.total()) / static_cast<double>(before.total())},
                 {"linear_budget", bm.aggregate},
                 {"macs_before", mac_json(count_macs(lm.model, mc.max_seq_len))},
                 {"macs_after", mac_json(count_macs(*compressed, mc.max_seq_len))}};
    if (c.strategy == Strategy::constant) {
        r.summary["beta"] = c.beta;
        r.summary["last_modules"] = c.last_modules == 0 ? mc.n_layers : c.last_modules;
    }
    if (plan.reference) {
        r.summary["reference_metric"] = metric_json(*plan.reference);
    }
    r.summary.update(extra);

    const DirectoryLock lock(c.output_dir);
    const fs::path bundle_path = c.output_dir / "compressed.lrcb";
    write_binary(bundle_path, bytes);
    write_text(c.output_dir / "plan.json", plan_to_json(plan));
    write_text(c.output_dir / "budget.csv", budget_csv(bm));
    write_text(c.output_dir / "summary.json", r.summary.dump(2) + "\n");
    r.outputs = {bundle_path, c.output_dir / "plan.json", c.output_dir / "budget.csv",
                 c.output_dir / "summary.json"};
    return r;
}

CommandResult cmd_eval(const RunConfig& c) {
    const LoadedModel a = load_model(c.bundle);
    std::optional<LoadedModel> b;
    if (!c.compare_bundle.empty()) {
        b = load_model(c.compare_bundle);
        if (b->tokenizer != a.tokenizer) {
            throw DataError("tokenizer mismatch: " + c.bundle.string() + " uses '" + a.tokenizer + "', " +
                            c.compare_bundle.string() + " uses '" + b->tokenizer + "'");
        }
    }
    if (c.tasks.empty() && c.eval_text.empty()) {
        throw ConfigError("eval needs \"tasks\" and/or \"eval_text\"");
    }
    const auto tok = make_tokenizer(a.tokenizer);
    const ScoringOptions opts{c.length_normalize};

    nlohmann::json rows = nlohmann::json::array();
    std::string csv = "task,metric,n_items,a,b,delta,disagreement\n";
    auto add_row = [&](const std::string& name, const MetricValue& va, const std::optional<MetricValue>& vb,
                       std::optional<double> disagree) {
        // Accuracy columns are percentages; perplexity is reported raw.
        const double scale = va.kind == MetricKind::accuracy ? 100.0 : 1.0;
        nlohmann::json row = {{"task", name},
                              {"metric", std::string(metric_name(va.kind))},
                              {"n_items", va.n_items},
                              {"a", va.value * scale},
                              {"b", nullptr},
                              {"delta", nullptr},
                              {"disagreement", nullptr}};
        csv += name + "," + std::string(metric_name(va.kind)) + "," + std::to_string(va.n_items) + "," +
               format_fixed(va.value * scale, 4) + ",";
        if (vb) {
            row["b"] = vb->value * scale;
            row["delta"] = (vb->value - va.value) * scale;
            csv += format_fixed(vb->value * scale, 4) + "," + format_fixed((vb->value - va.value) * scale, 4);
        } else {
            csv += ",";
        }
        csv += ",";
        if (disagree) {
            row["disagreement"] = *disagree * 100.0;
            csv += format_fixed(*disagree * 100.0, 4);
        }
        csv += "\n";
        rows.push_back(std::move(row));
    };

    for (const ChoiceTask& task : load_tasks(c.tasks, *tok)) {
        const EvalPart<ChoiceItem> part = split_20_80(task, split_seed(c)).eval;
        const auto pa = predict_choices(a.model, part.items, opts);
        std::optional<MetricValue> vb;
        std::optional<double> dis;
        if (b) {
            const auto pb = predict_choices(b->model, part.items, opts);
            vb = accuracy_of(pb, part.items);
            dis = disagreement(pa, pb);
        }
        add_row(task.source, accuracy_of(pa, part.items), vb, dis);
    }
    for (const TextCorpus& corpus : load_corpora(c.eval_text, *tok)) {
        const EvalPart<Document> part = split_20_80(corpus, split_seed(c)).eval;
        std::optional<MetricValue> vb;
        if (b) {
            vb = perplexity(b->model, part.items);
        }
        add_row(corpus.source, perplexity(a.model, part.items), vb, std::nullopt);
    }

    CommandResult r;
    r.summary = {{"bundle_a", {{"path", c.bundle.string()}, {"hash", a.hash}}},
                 {"bundle_b", b ? nlohmann::json{{"path", c.compare_bundle.string()}, {"hash", b->hash}}
                                : nlohmann::json(nullptr)},
                 {"split_seed", split_seed(c)},
                 {"results", rows}};
    const DirectoryLock lock(c.output_dir);
    write_text(c.output_dir / "eval.json", r.summary.dump(2) + "\n");
    write_text(c.output_dir / "eval.csv", csv);
    r.outputs = {c.output_dir / "eval.json", c.output_dir / "eval.csv"};
    return r;
}

CommandResult cmd_report(const RunConfig& c) {
    const LoadedModel lm = load_model(c.bundle);
    const ModelConfig& mc = lm.model.config();
    const std::vector<LayerFootprint> before = dense_footprints(mc);
    std::vector<LayerFootprint> after;
    nlohmann::json plan_info = nullptr;
    if (!c.plan.empty()) {
        for (const LayerFootprint& fp : footprints(lm.model)) {
            if (fp.rank) {
                throw DataError("report: plan given but bundle " + c.bundle.string() +
                                " is already compressed (" + fp.id.name() + " is factored)");
            }
        }
        const RankPlan plan = plan_from_json(read_text(c.plan));
        after = planned_footprints(mc, plan);
        std::size_t factored = 0;
        for (const PlanEntry& e : plan.entries) {
            factored += e.intact() ? 0 : 1;
        }
        plan_info = {{"path", c.plan.string()},
                     {"mode", std::string(mode_name(plan.mode))},
                     {"entries", plan.entries.size()},
                     {"factored_layers", factored}};
        if (plan.reference) {
            plan_info["reference_metric"] = metric_json(*plan.reference);
        }
    } else {
        after = footprints(lm.model);
    }
    const BudgetMap bm = budget_map(before, after);
    const ParamReport pb = count_params(mc, before);
    const ParamReport pa = count_params(mc, after);

    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t i = 0; i < after.size(); ++i) {
        layers.push_back({{"layer", after[i].id.name()},
                          {"d_out", after[i].shape.d_out},
                          {"d_in", after[i].shape.d_in},
                          {"rank", after[i].rank ? nlohmann::json(*after[i].rank) : nlohmann::json(nullptr)},
                          {"bias", after[i].has_bias},
                          {"params", after[i].params()},
                          {"retained_fraction", bm.entries[i].retained_fraction}});
    }
    CommandResult r;
    r.summary = {{"bundle", {{"path", c.bundle.string()}, {"hash", lm.hash}}},
                 {"config", config_to_json(mc)},
                 {"plan", plan_info},
                 {"params_dense", param_json(pb)},
                 {"params", param_json(pa)},
                 {"param_ratio", static_cast<double>(pa.total()) / static_cast<double>(pb.total())},
                 {"linear_budget", bm.aggregate},
                 {"macs_dense", mac_json(count_macs(mc, before, mc.max_seq_len))},
                 {"macs", mac_json(count_macs(mc, after, mc.max_seq_len))},
                 {"mac_seq_len", mc.max_seq_len},
                 {"layers", layers}};
    const DirectoryLock lock(c.output_dir);
    write_text(c.output_dir / "report.json", r.summary.dump(2) + "\n");
    write_text(c.output_dir / "budget.csv", budget_csv(bm));
    r.outputs = {c.output_dir / "report.json", c.output_dir / "budget.csv"};
    return r;
}

CommandResult cmd_init(const RunConfig& c) {
    nlohmann::json mj = config_to_json(ModelConfig::desk_default());
    for (const auto& [key, v] : c.model.items()) {
        if (!mj.contains(key)) {
            throw ConfigError("unknown model field '" + key + "'");
        }
        mj[key] = v;
    }
    ModelConfig mc;
    try {
        mc = config_from_json(mj);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    mc.validate();
    InitOptions opts;
    opts.spectral_decay = c.spectral_decay;
    const DecoderModel model = init_random_model(mc, derive_seed(c.require_seed(), "init"), opts);
    const std::string bytes = model_to_bundle(model, c.dtype.value_or(DType::f32), "byte").serialize();

    const DirectoryLock lock(c.output_dir);
    const fs::path out = c.output_dir / "model.lrcb";
    write_binary(out, bytes);
    CommandResult r;
    r.outputs = {out};
    r.summary = {{"bundle", out.string()},
                 {"hash", content_hash(bytes)},
                 {"config", config_to_json(mc)},
                 {"params", count_params(model).total()}};
    return r;
}

CommandResult cmd_synth(const RunConfig& c) {
    if (c.synth_documents == 0 || c.synth_items == 0) {
        throw ConfigError("synth_documents and synth_items must be >= 1");
    }
    SplitMix64 rng(derive_seed(c.require_seed(), "synth"));
    const std::vector<std::string> lex = synth_lexicon(rng, 64);

    std::string corpus;
    for (std::size_t d = 0; d < c.synth_documents; ++d) {
        if (d > 0) {
            corpus += "\n";
        }
        const std::size_t sentences = 2 + rng.below(4);
        for (std::size_t s = 0; s < sentences; ++s) {
            const auto words = synth_sentence(rng, lex);
            corpus += join_words(words, 0, words.size()) + ".\n";
        }
    }

    std::string tasks;
    for (std::size_t i = 0; i < c.synth_items; ++i) {
        const auto words = synth_sentence(rng, lex);
        const std::size_t cut = 2 + rng.below(words.size() - 2);
        std::vector<std::string> choices = {" " + join_words(words, cut, words.size()) + "."};
        while (choices.size() < c.synth_choices) {
            const auto other = synth_sentence(rng, lex);
            const std::string alt = " " + join_words(other, 0, std::min(other.size(), words.size() - cut)) + ".";
            if (std::find(choices.begin(), choices.end(), alt) == choices.end()) {
                choices.push_back(alt);
            }
        }
        const std::size_t gold = rng.below(choices.size());
        std::swap(choices[0], choices[gold]);
        const nlohmann::json item = {{"context", join_words(words, 0, cut)}, {"choices", choices}, {"gold", gold}};
        tasks += item.dump() + "\n";
    }

    const DirectoryLock lock(c.output_dir);
    write_text(c.output_dir / "corpus.txt", corpus);
    write_text(c.output_dir / "tasks.jsonl", tasks);
    CommandResult r;
    r.outputs = {c.output_dir / "corpus.txt", c.output_dir / "tasks.jsonl"};
    r.summary = {{"documents", c.synth_documents}, {"items", c.synth_items}};
    return r;
}

} // namespace lrc
