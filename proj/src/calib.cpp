// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrc/calib.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "lrc/errors.hpp"
#include "lrc/rng.hpp"

namespace lrc {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string_view strip_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
    }
    return line;
}

bool is_blank(std::string_view line) {
    return std::all_of(line.begin(), line.end(),
                       [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

template <typename Item>
void fill_parts(const std::vector<Item>& all, const SplitIndices& idx, Split<Item>& out) {
    out.search.indices = idx.search;
    out.eval.indices = idx.eval;
    for (const std::size_t i : idx.search) {
        out.search.items.push_back(all[i]);
    }
    for (const std::size_t i : idx.eval) {
        out.eval.items.push_back(all[i]);
    }
}

} // namespace

std::vector<Token> ByteTokenizer::encode(std::string_view text) const {
    std::vector<Token> ids;
    ids.reserve(text.size());
    for (const char c : text) {
        ids.push_back(static_cast<unsigned char>(c));
    }
    return ids;
}

std::string ByteTokenizer::decode(std::span<const Token> tokens) const {
    std::string out;
    out.reserve(tokens.size());
    for (const Token t : tokens) {
        if (t > 255) {
            throw DataError("ByteTokenizer: id " + std::to_string(t) + " is not a byte");
        }
        out.push_back(static_cast<char>(t));
    }
    return out;
}

std::unique_ptr<Tokenizer> make_tokenizer(std::string_view name) {
    if (name == "byte") {
        return std::make_unique<ByteTokenizer>();
    }
    throw ConfigError("unknown tokenizer '" + std::string(name) + "'");
}

TextCorpus parse_text(std::string_view content, std::string source, const Tokenizer& tokenizer) {
    TextCorpus corpus;
    corpus.source = std::move(source);
    std::string current;
    bool have_lines = false;
    auto flush = [&] {
        if (have_lines) {
            corpus.documents.push_back(tokenizer.encode(current));
        }
        current.clear();
        have_lines = false;
    };
    std::size_t pos = 0;
    while (pos <= content.size()) {
        const std::size_t nl = content.find('\n', pos);
        const std::size_t end = nl == std::string_view::npos ? content.size() : nl;
        const std::string_view line = strip_cr(content.substr(pos, end - pos));
        if (is_blank(line)) {
            flush();
        } else {
            if (have_lines) {
                current.push_back('\n');
            }
            current.append(line);
            have_lines = true;
        }
        if (nl == std::string_view::npos) {
            break;
        }
        pos = nl + 1;
    }
    flush();
    if (corpus.documents.empty()) {
        throw DataError("text corpus " + corpus.source + " is empty");
    }
    return corpus;
}

TextCorpus load_text(const std::filesystem::path& path, const Tokenizer& tokenizer) {
    return parse_text(read_file(path), path.string(), tokenizer);
}

ChoiceTask parse_choices(std::string_view content, std::string source, const Tokenizer& tokenizer) {
    ChoiceTask task;
    task.source = std::move(source);
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < content.size()) {
        const std::size_t nl = content.find('\n', pos);
        const std::size_t end = nl == std::string_view::npos ? content.size() : nl;
        const std::string_view line = strip_cr(content.substr(pos, end - pos));
        pos = nl == std::string_view::npos ? content.size() : nl + 1;
        ++line_no;
        if (is_blank(line)) {
            continue;
        }
        auto fail = [&](const std::string& why) {
            throw DataError(task.source + ":" + std::to_string(line_no) + ": " + why);
        };
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            fail(std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object() || !obj.contains("context") || !obj.contains("choices") ||
            !obj.contains("gold")) {
            fail("expected an object with context, choices and gold");
        }
        if (!obj["context"].is_string() || !obj["choices"].is_array() ||
            !obj["gold"].is_number_integer()) {
            fail("context must be a string, choices an array and gold an integer");
        }
        ChoiceItem item;
        item.context = tokenizer.encode(obj["context"].get<std::string>());
        if (item.context.empty()) {
            fail("context is empty");
        }
        for (const auto& c : obj["choices"]) {
            if (!c.is_string()) {
                fail("choices must be strings");
            }
            auto ids = tokenizer.encode(c.get<std::string>());
            if (ids.empty()) {
                fail("empty choice");
            }
            item.choices.push_back(std::move(ids));
        }
        if (item.choices.size() < 2) {
            fail("need at least 2 choices");
        }
        const auto gold = obj["gold"].get<long long>();
        if (gold < 0 || static_cast<std::size_t>(gold) >= item.choices.size()) {
            fail("gold index " + std::to_string(gold) + " out of range");
        }
        item.gold = static_cast<std::size_t>(gold);
        task.items.push_back(std::move(item));
    }
    if (task.items.empty()) {
        throw DataError("task file " + task.source + " is empty");
    }
    return task;
}

ChoiceTask load_choices(const std::filesystem::path& path, const Tokenizer& tokenizer) {
    return parse_choices(read_file(path), path.string(), tokenizer);
}

SplitIndices split_indices_20_80(std::size_t n, uint64_t seed) {
    if (n < 5) {
        throw DataError("split_20_80: need at least 5 items, got " + std::to_string(n));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(seed);
    for (std::size_t i = n - 1; i >= 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
        std::swap(order[i], order[j]);
    }
    const std::size_t n_search = n / 5;
    SplitIndices out;
    out.search.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_search));
    out.eval.assign(order.begin() + static_cast<std::ptrdiff_t>(n_search), order.end());
    std::sort(out.search.begin(), out.search.end());
    std::sort(out.eval.begin(), out.eval.end());
    return out;
}

Split<ChoiceItem> split_20_80(const ChoiceTask& task, uint64_t seed) {
    Split<ChoiceItem> out;
    out.seed = seed;
    fill_parts(task.items, split_indices_20_80(task.items.size(), seed), out);
    return out;
}

Split<Document> split_20_80(const TextCorpus& corpus, uint64_t seed) {
    Split<Document> out;
    out.seed = seed;
    fill_parts(corpus.documents, split_indices_20_80(corpus.documents.size(), seed), out);
    return out;
}

CalibrationSource calibration_source(const TextCorpus& corpus) {
    return {corpus.source, corpus.documents};
}

CalibrationSource calibration_source(const SearchPart<ChoiceItem>& part, std::string name) {
    CalibrationSource src;
    src.name = std::move(name);
    for (const ChoiceItem& item : part.items) {
        std::vector<Token> seq = item.context;
        const auto& gold = item.choices[item.gold];
        seq.insert(seq.end(), gold.begin(), gold.end());
        src.sequences.push_back(std::move(seq));
    }
    return src;
}

CalibrationSet make_calibration(std::span<const CalibrationSource> sources, std::size_t samples,
                                std::size_t max_len, uint64_t seed) {
    if (sources.empty()) {
        throw DataError("make_calibration: no calibration sources");
    }
    if (samples == 0 || max_len == 0) {
        throw ConfigError("make_calibration: sample count and max_len must be >= 1");
    }
    for (const auto& src : sources) {
        if (src.sequences.empty()) {
            throw DataError("make_calibration: source " + src.name + " is empty");
        }
        for (const auto& seq : src.sequences) {
            if (seq.empty()) {
                throw DataError("make_calibration: source " + src.name + " has an empty sequence");
            }
        }
    }
    CalibrationSet set;
    set.sample_count = samples;
    set.max_len = max_len;

    std::vector<std::vector<CalibrationSample>> per_source(sources.size());
    for (std::size_t s = 0; s < sources.size(); ++s) {
        const std::size_t quota = samples / sources.size() + (s < samples % sources.size() ? 1 : 0);
        const std::size_t pool = sources[s].sequences.size();
        SplitMix64 rng(derive_seed(seed, "calibration/" + std::to_string(s)));
        std::vector<std::size_t> picks;
        if (quota <= pool) {
            // Partial Fisher–Yates: first `quota` slots of a shuffled index list.
            std::vector<std::size_t> order(pool);
            std::iota(order.begin(), order.end(), std::size_t{0});
            for (std::size_t i = 0; i < quota; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(rng.below(pool - i));
                std::swap(order[i], order[j]);
            }
            picks.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(quota));
        } else {
            set.with_replacement = true;
            for (std::size_t i = 0; i < quota; ++i) {
                picks.push_back(static_cast<std::size_t>(rng.below(pool)));
            }
        }
        for (const std::size_t item : picks) {
            const auto& seq = sources[s].sequences[item];
            const std::size_t len = std::min(max_len, seq.size());
            per_source[s].push_back(
                {s, item, std::vector<Token>(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(len))});
        }
    }
    for (std::size_t round = 0; set.samples.size() < samples; ++round) {
        for (auto& bucket : per_source) {
            if (round < bucket.size()) {
                set.samples.push_back(std::move(bucket[round]));
            }
        }
    }
    return set;
}

} // namespace lrc
