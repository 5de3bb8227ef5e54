// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0
//
// LLaMA-style decoder-only transformer for teacher-forced scoring.
//
// Each module (block) holds seven linear layers: attention q, k, v, o and the
// gated MLP's gate g, up u and down d. Activations are stored feature-major
// (d × T, one column per token) so that a linear layer is W·X and captured
// activations are exactly the X and Y = W·X the decomposition works on.
//
// Fixed architecture constants:
//   RMSNorm:  x / sqrt(mean(x²) + norm_epsilon) ⊙ weight
//   RoPE:     adjacent feature pairs (2j, 2j+1) inside each head, angle
//             t · rope_base^(−2j/head_dim)
//   MLP:      d( silu(g·x) ⊙ u·x ),  silu(z) = z / (1 + e^−z)
//   Attention: causal softmax(q·kᵀ / sqrt(head_dim)) per head

#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lrc/linalg.hpp"

namespace lrc {

using Token = uint32_t;

enum class LayerKind : uint8_t { q, k, v, o, g, u, d };

inline constexpr std::array<LayerKind, 7> kLayerKinds = {
    LayerKind::q, LayerKind::k, LayerKind::v, LayerKind::o,
    LayerKind::g, LayerKind::u, LayerKind::d};

std::string_view kind_name(LayerKind kind);
// Throws DataError for anything outside the seven-letter taxonomy.
LayerKind parse_kind(std::string_view name);

struct LayerId {
    std::size_t module_index = 0;
    LayerKind kind = LayerKind::q;

    auto operator<=>(const LayerId&) const = default;
    std::string name() const; // "layers.<module>.<kind>"
};

struct ModelConfig {
    std::size_t vocab_size = 256;
    std::size_t d_model = 64;
    std::size_t n_layers = 4;
    std::size_t n_heads = 4;
    std::size_t d_ff = 172;
    std::size_t max_seq_len = 128;
    double norm_epsilon = 1e-5;
    double rope_base = 10000.0;

    // Throws ConfigError. n_layers == 0 is accepted (an empty stack still
    // has embeddings and a head, useful for accounting).
    void validate() const;
    std::size_t head_dim() const { return d_model / n_heads; }

    static ModelConfig desk_default() { return {}; }
    // Public LLaMA-7B shape; accounting only.
    static ModelConfig llama_7b_shape();

    bool operator==(const ModelConfig&) const = default;
};

struct LayerShape {
    std::size_t d_out = 0; // d2
    std::size_t d_in = 0;  // d1
};

LayerShape layer_shape(const ModelConfig& config, LayerKind kind);

struct DenseLayer {
    Matrix weight; // d_out × d_in
};

// w_down·(w_up·x) + bias.
struct FactoredLayer {
    Matrix w_down; // d_out × r
    Matrix w_up;   // r × d_in
    std::optional<Vector> bias;

    std::size_t rank() const { return w_up.rows(); }
    // Throws DataError unless r ≥ 1 and the factor/bias shapes agree.
    void validate() const;
};

using LinearLayer = std::variant<DenseLayer, FactoredLayer>;

LayerShape shape_of(const LinearLayer& layer);
uint64_t param_count(const LinearLayer& layer);
Matrix apply_layer(const LinearLayer& layer, const Matrix& x);

struct Block {
    Vector attn_norm;
    Vector mlp_norm;
    std::array<LinearLayer, 7> linear; // indexed by LayerKind
};

// Observer invoked with (layer, input X, output Y) for every linear layer
// during a forward pass, in dataflow order.
using ActivationObserver =
    std::function<void(const LayerId&, const Matrix& x, const Matrix& y)>;

class DecoderModel {
public:
    DecoderModel() = default;
    // Throws DataError when any tensor shape disagrees with the config.
    DecoderModel(ModelConfig config, Matrix embeddings, std::vector<Block> blocks,
                 Vector final_norm, Matrix output_head);

    const ModelConfig& config() const { return config_; }
    const Matrix& embeddings() const { return embeddings_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    const Vector& final_norm() const { return final_norm_; }
    const Matrix& output_head() const { return output_head_; }

    // Throws DataError for an unknown LayerId.
    const LinearLayer& layer(const LayerId& id) const;
    // All 7·L layers, module-major in q,k,v,o,g,u,d order.
    std::vector<LayerId> layer_ids() const;

    // Logits, T × vocab. Throws DataError on empty/overlong input or
    // out-of-range token ids.
    Matrix forward(std::span<const Token> tokens, const ActivationObserver& observer = {}) const;

    // Swaps the layer at `id`; shapes must match the architecture slot.
    void set_layer(const LayerId& id, LinearLayer layer);

    void set_output_head(Matrix head);

private:
    void check_tokens(std::span<const Token> tokens) const;

    ModelConfig config_;
    Matrix embeddings_;  // vocab × d
    std::vector<Block> blocks_;
    Vector final_norm_;
    Matrix output_head_; // vocab × d
};

// Input and output activations of one layer for a token sequence.
struct Capture {
    Matrix x; // d_in × T
    Matrix y; // d_out × T
};

Capture capture(const DecoderModel& model, std::span<const Token> tokens, const LayerId& id);

// Copy of `model` with `id` replaced by `factored`.
DecoderModel replace_layer(DecoderModel model, const LayerId& id, FactoredLayer factored);

// Shape-level description of one linear layer, enough for exact accounting
// without allocating weights.
struct LayerFootprint {
    LayerId id;
    LayerShape shape;
    std::optional<std::size_t> rank; // set for factored layers
    bool has_bias = false;

    uint64_t params() const;
    uint64_t macs_per_token() const; // multiplies only; bias adds excluded
};

std::vector<LayerFootprint> dense_footprints(const ModelConfig& config);
std::vector<LayerFootprint> footprints(const DecoderModel& model);

struct ParamReport {
    std::vector<std::pair<LayerId, uint64_t>> per_layer;
    uint64_t linear = 0;
    uint64_t embeddings = 0;
    uint64_t norms = 0;
    uint64_t head = 0;

    uint64_t total() const { return linear + embeddings + norms + head; }
};

ParamReport count_params(const ModelConfig& config, std::span<const LayerFootprint> layers);
ParamReport count_params(const DecoderModel& model);

// linear: Σ layer multiplies × seq_len.
// attention: per module, causal q·kᵀ plus probs·v, Σ_{t=1..T} 2·t·d = T(T+1)·d.
// head: vocab·d·seq_len.
struct MacReport {
    uint64_t linear = 0;
    uint64_t attention = 0;
    uint64_t head = 0;

    uint64_t total() const { return linear + attention + head; }
};

MacReport count_macs(const ModelConfig& config, std::span<const LayerFootprint> layers,
                     std::size_t seq_len);
MacReport count_macs(const DecoderModel& model, std::size_t seq_len);

struct InitOptions {
    // Singular values of each random linear weight decay as (k+1)^−decay.
    // 0 gives an i.i.d. Gaussian matrix.
    double spectral_decay = 0.0;
};

// Seeded toy weights (SplitMix64-driven, platform independent).
DecoderModel init_random_model(const ModelConfig& config, uint64_t seed,
                               const InitOptions& options = {});

} // namespace lrc
