// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0
//
// TensorBundle container (models and gram banks share it).
//
// Layout, all integers little-endian:
//   [0, 4)    magic "LRCB"
//   [4, 8)    u32 format version (1)
//   [8, 16)   u64 header length H
//   [16, 16+H) header JSON, space-padded so that 16+H is a multiple of 8
//   payload   tensors, row-major IEEE-754 little-endian
//
// Header: {"format_version": 1, "kind": str, "metadata": {...},
//          "tensors": {name: {"dtype": "f32"|"f64", "offset": n, "shape": [..]}}}
// serialized compactly with keys sorted. Offsets are relative to the payload
// start, 8-byte aligned, assigned in name order with zero padding between
// tensors; the payload ends at the last tensor's end rounded up to 8.
//
// Model tensors: tok_embeddings, output, norm, layers.<m>.attn_norm,
// layers.<m>.mlp_norm and per linear layer either layers.<m>.<kind>.weight
// or layers.<m>.<kind>.{w_down,w_up[,bias]}.
// Gram bank tensors: layers.<m>.<kind>.{gram,input_sum}; sample counts live
// in metadata.sample_counts.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lrc/linalg.hpp"
#include "lrc/model.hpp"
#include "lrc/search.hpp"

namespace lrc {

enum class DType { f32, f64 };

std::string_view dtype_name(DType dtype);
DType parse_dtype(std::string_view name);

struct Tensor {
    std::vector<std::size_t> shape;
    DType dtype = DType::f32;
    std::vector<double> values; // f32 tensors hold exactly representable floats

    std::size_t element_count() const;
};

inline constexpr uint32_t kBundleVersion = 1;

struct TensorBundle {
    std::string kind;                        // "model" | "gram_bank"
    nlohmann::json metadata = nlohmann::json::object();
    std::map<std::string, Tensor> tensors;

    // Values are rounded to the tensor's dtype on write.
    std::string serialize() const;
    // Throws DataError on any structural violation.
    static TensorBundle parse(std::string_view bytes);
};

std::string read_binary(const std::filesystem::path& path);
void write_binary(const std::filesystem::path& path, std::string_view bytes);

TensorBundle load_bundle(const std::filesystem::path& path);
void save_bundle(const std::filesystem::path& path, const TensorBundle& bundle);

// 16 hex digits of FNV-1a 64 over the bytes.
std::string content_hash(std::string_view bytes);

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

TensorBundle model_to_bundle(const DecoderModel& model, DType dtype, std::string_view tokenizer = "byte");
// Throws DataError listing every missing or unexpected tensor name.
DecoderModel model_from_bundle(const TensorBundle& bundle);
std::string bundle_tokenizer(const TensorBundle& bundle);
// dtype of the bundle's embedding table (the model's storage precision).
DType bundle_dtype(const TensorBundle& bundle);

TensorBundle gram_bank_to_bundle(const GramBank& bank, const ModelConfig& config,
                                 const nlohmann::json& calibration_info);
GramBank gram_bank_from_bundle(const TensorBundle& bundle);

} // namespace lrc
