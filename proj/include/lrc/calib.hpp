// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Data ingestion: text corpora, multiple-choice tasks, the deterministic
// 20/80 search/eval split and calibration sampling.
//
// File formats
//   text:  UTF-8 plain text; documents are separated by one or more blank
//          lines. Lines inside a document are joined with '\n'.
//   tasks: JSONL, one object per non-blank line:
//          {"context": str, "choices": [str, ...], "gold": int}
//
// Split: indices 0..n−1 are shuffled by Fisher–Yates (i from n−1 down to 1,
// j = SplitMix64.next() % (i+1)) seeded with the split seed; the first
// floor(0.2·n) shuffled indices form the search part, the rest the eval
// part. Both parts are returned in ascending index order.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lrc/model.hpp"

namespace lrc {

class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::string name() const = 0;
    virtual std::size_t vocab_size() const = 0;
    virtual std::vector<Token> encode(std::string_view text) const = 0;
    virtual std::string decode(std::span<const Token> tokens) const = 0;
};

// Identity mapping between bytes and ids 0..255.
class ByteTokenizer final : public Tokenizer {
public:
    std::string name() const override { return "byte"; }
    std::size_t vocab_size() const override { return 256; }
    std::vector<Token> encode(std::string_view text) const override;
    std::string decode(std::span<const Token> tokens) const override;
};

// Throws ConfigError for unknown names. Only "byte" ships.
std::unique_ptr<Tokenizer> make_tokenizer(std::string_view name);

using Document = std::vector<Token>;

struct TextCorpus {
    std::string source;
    std::vector<Document> documents;
};

struct ChoiceItem {
    std::vector<Token> context;
    std::vector<std::vector<Token>> choices;
    std::size_t gold = 0;
};

struct ChoiceTask {
    std::string source;
    std::vector<ChoiceItem> items;
};

// Throw DataError on unreadable/empty input; malformed task lines are
// reported with their 1-based line number.
TextCorpus parse_text(std::string_view content, std::string source, const Tokenizer& tokenizer);
TextCorpus load_text(const std::filesystem::path& path, const Tokenizer& tokenizer);
ChoiceTask parse_choices(std::string_view content, std::string source, const Tokenizer& tokenizer);
ChoiceTask load_choices(const std::filesystem::path& path, const Tokenizer& tokenizer);

// Items usable for rank search. Routines that drive the search accept only
// this type; the eval part cannot reach them.
template <typename Item>
struct SearchPart {
    std::vector<std::size_t> indices;
    std::vector<Item> items;
};

// Held-out items, touched only by final reporting.
template <typename Item>
struct EvalPart {
    std::vector<std::size_t> indices;
    std::vector<Item> items;
};

template <typename Item>
struct Split {
    SearchPart<Item> search;
    EvalPart<Item> eval;
    uint64_t seed = 0;
};

struct SplitIndices {
    std::vector<std::size_t> search;
    std::vector<std::size_t> eval;
};

// Throws DataError for n < 5.
SplitIndices split_indices_20_80(std::size_t n, uint64_t seed);
Split<ChoiceItem> split_20_80(const ChoiceTask& task, uint64_t seed);
Split<Document> split_20_80(const TextCorpus& corpus, uint64_t seed);

struct CalibrationSource {
    std::string name;
    std::vector<std::vector<Token>> sequences;
};

CalibrationSource calibration_source(const TextCorpus& corpus);
// Context followed by the gold continuation of each search item.
CalibrationSource calibration_source(const SearchPart<ChoiceItem>& part, std::string name);

struct CalibrationSample {
    std::size_t source = 0;
    std::size_t item = 0;
    std::vector<Token> tokens;
};

inline constexpr std::size_t kDefaultCalibrationSamples = 512;
inline constexpr std::size_t kDefaultCalibrationLength = 128;

struct CalibrationSet {
    std::vector<CalibrationSample> samples;
    std::size_t sample_count = 0; // D
    std::size_t max_len = 0;
    bool with_replacement = false; // some source had fewer items than its quota
};

// Draws exactly `samples` sequences split evenly over the sources (remainder
// to the first ones), uniformly without replacement where the source is large
// enough and with replacement otherwise. Sequences are truncated to max_len.
// Samples are interleaved round-robin across sources.
CalibrationSet make_calibration(std::span<const CalibrationSource> sources, std::size_t samples,
                                std::size_t max_len, uint64_t seed);

} // namespace lrc
