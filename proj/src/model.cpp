// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrc/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lrc/errors.hpp"
#include "lrc/rng.hpp"

namespace lrc {

namespace {

constexpr std::array<std::string_view, 7> kKindNames = {"q", "k", "v", "o", "g", "u", "d"};

std::size_t kind_index(LayerKind kind) { return static_cast<std::size_t>(kind); }

std::string shape_string(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

Matrix rms_norm(const Matrix& x, const Vector& weight, double eps) {
    const std::size_t d = x.rows();
    const std::size_t t_len = x.cols();
    Vector scale(t_len, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const auto row = x.row(i);
        for (std::size_t t = 0; t < t_len; ++t) {
            scale[t] += row[t] * row[t];
        }
    }
    for (double& s : scale) {
        s = 1.0 / std::sqrt(s / static_cast<double>(d) + eps);
    }
    Matrix out(d, t_len);
    for (std::size_t i = 0; i < d; ++i) {
        const auto src = x.row(i);
        auto dst = out.row(i);
        for (std::size_t t = 0; t < t_len; ++t) {
            dst[t] = src[t] * scale[t] * weight[i];
        }
    }
    return out;
}

void apply_rope(Matrix& x, std::size_t head_dim, double base) {
    const std::size_t t_len = x.cols();
    const std::size_t heads = x.rows() / head_dim;
    for (std::size_t j = 0; j < head_dim / 2; ++j) {
        const double freq = std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(head_dim));
        for (std::size_t t = 0; t < t_len; ++t) {
            const double angle = static_cast<double>(t) * freq;
            const double c = std::cos(angle);
            const double s = std::sin(angle);
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t r0 = h * head_dim + 2 * j;
                const double a = x(r0, t);
                const double b = x(r0 + 1, t);
                x(r0, t) = a * c - b * s;
                x(r0 + 1, t) = a * s + b * c;
            }
        }
    }
}

// Causal multi-head attention on feature-major q, k, v; returns d × T.
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t n_heads) {
    const std::size_t d = q.rows();
    const std::size_t t_len = q.cols();
    const std::size_t hd = d / n_heads;
    const Matrix qt = q.transposed();
    const Matrix kt = k.transposed();
    const Matrix vt = v.transposed();
    Matrix ctx(t_len, d);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    Vector scores(t_len);
    for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t off = h * hd;
        for (std::size_t t = 0; t < t_len; ++t) {
            const auto qrow = qt.row(t).subspan(off, hd);
            double max_score = -INFINITY;
            for (std::size_t s = 0; s <= t; ++s) {
                const auto krow = kt.row(s).subspan(off, hd);
                double acc = 0.0;
                for (std::size_t i = 0; i < hd; ++i) {
                    acc += qrow[i] * krow[i];
                }
                scores[s] = acc * scale;
                max_score = std::max(max_score, scores[s]);
            }
            double denom = 0.0;
            for (std::size_t s = 0; s <= t; ++s) {
                scores[s] = std::exp(scores[s] - max_score);
                denom += scores[s];
            }
            auto out = ctx.row(t).subspan(off, hd);
            for (std::size_t s = 0; s <= t; ++s) {
                const double p = scores[s] / denom;
                const auto vrow = vt.row(s).subspan(off, hd);
                for (std::size_t i = 0; i < hd; ++i) {
                    out[i] += p * vrow[i];
                }
            }
        }
    }
    return ctx.transposed();
}

void add_in_place(Matrix& x, const Matrix& delta) {
    auto dst = x.data();
    const auto src = delta.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
}

Matrix random_weight(SplitMix64& rng, std::size_t d_out, std::size_t d_in, double decay) {
    Matrix w(d_out, d_in);
    if (decay == 0.0) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(d_in));
        for (double& x : w.data()) {
            x = rng.normal() * scale;
        }
        return w;
    }
    // Σ_k s_k a_k b_kᵀ with unit random directions and a power-law spectrum
    // normalized so that ‖W‖_F² ≈ d_out (same as the i.i.d. case).
    const std::size_t m = std::min(d_out, d_in);
    double energy = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        energy += std::pow(static_cast<double>(k + 1), -2.0 * decay);
    }
    const double c = std::sqrt(static_cast<double>(d_out) / energy);
    Vector a(d_out);
    Vector b(d_in);
    for (std::size_t k = 0; k < m; ++k) {
        double na = 0.0;
        double nb = 0.0;
        for (double& x : a) {
            x = rng.normal();
            na += x * x;
        }
        for (double& x : b) {
            x = rng.normal();
            nb += x * x;
        }
        const double s = c * std::pow(static_cast<double>(k + 1), -decay) / std::sqrt(na * nb);
        for (std::size_t i = 0; i < d_out; ++i) {
            auto row = w.row(i);
            const double ai = s * a[i];
            for (std::size_t j = 0; j < d_in; ++j) {
                row[j] += ai * b[j];
            }
        }
    }
    return w;
}

} // namespace

std::string_view kind_name(LayerKind kind) { return kKindNames[kind_index(kind)]; }

LayerKind parse_kind(std::string_view name) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (kKindNames[i] == name) {
            return kLayerKinds[i];
        }
    }
    throw DataError("unknown layer kind '" + std::string(name) + "' (expected one of q,k,v,o,g,u,d)");
}

std::string LayerId::name() const {
    return "layers." + std::to_string(module_index) + "." + std::string(kind_name(kind));
}

void ModelConfig::validate() const {
    std::ostringstream err;
    if (vocab_size == 0 || d_model == 0 || n_heads == 0 || d_ff == 0 || max_seq_len == 0) {
        err << "ModelConfig: vocab_size, d_model, n_heads, d_ff and max_seq_len must be >= 1";
    } else if (d_model % n_heads != 0) {
        err << "ModelConfig: d_model (" << d_model << ") not divisible by n_heads (" << n_heads << ")";
    } else if (head_dim() % 2 != 0) {
        err << "ModelConfig: head_dim (" << head_dim() << ") must be even for rotary embedding";
    } else if (!(norm_epsilon > 0.0) || !(rope_base > 1.0)) {
        err << "ModelConfig: norm_epsilon must be > 0 and rope_base > 1";
    }
    if (!err.str().empty()) {
        throw ConfigError(err.str());
    }
}

ModelConfig ModelConfig::llama_7b_shape() {
    ModelConfig c;
    c.vocab_size = 32000;
    c.d_model = 4096;
    c.n_layers = 32;
    c.n_heads = 32;
    c.d_ff = 11008;
    c.max_seq_len = 2048;
    c.norm_epsilon = 1e-6;
    return c;
}

LayerShape layer_shape(const ModelConfig& config, LayerKind kind) {
    switch (kind) {
    case LayerKind::g:
    case LayerKind::u:
        return {config.d_ff, config.d_model};
    case LayerKind::d:
        return {config.d_model, config.d_ff};
    default:
        return {config.d_model, config.d_model};
    }
}

void FactoredLayer::validate() const {
    if (w_up.rows() == 0) {
        throw DataError("FactoredLayer: rank must be >= 1");
    }
    if (w_down.cols() != w_up.rows()) {
        throw DataError("FactoredLayer: w_down is " + shape_string(w_down.rows(), w_down.cols()) +
                        " but w_up is " + shape_string(w_up.rows(), w_up.cols()));
    }
    if (bias && bias->size() != w_down.rows()) {
        throw DataError("FactoredLayer: bias length " + std::to_string(bias->size()) +
                        " does not match output dimension " + std::to_string(w_down.rows()));
    }
}

LayerShape shape_of(const LinearLayer& layer) {
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
        return {dense->weight.rows(), dense->weight.cols()};
    }
    const auto& f = std::get<FactoredLayer>(layer);
    return {f.w_down.rows(), f.w_up.cols()};
}

uint64_t param_count(const LinearLayer& layer) {
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
        return dense->weight.size();
    }
    const auto& f = std::get<FactoredLayer>(layer);
    return f.w_down.size() + f.w_up.size() + (f.bias ? f.bias->size() : 0);
}

Matrix apply_layer(const LinearLayer& layer, const Matrix& x) {
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
        return matmul(dense->weight, x);
    }
    const auto& f = std::get<FactoredLayer>(layer);
    Matrix y = matmul(f.w_down, matmul(f.w_up, x));
    if (f.bias) {
        for (std::size_t i = 0; i < y.rows(); ++i) {
            const double b = (*f.bias)[i];
            for (double& v : y.row(i)) {
                v += b;
            }
        }
    }
    return y;
}

DecoderModel::DecoderModel(ModelConfig config, Matrix embeddings, std::vector<Block> blocks,
                           Vector final_norm, Matrix output_head)
    : config_(config),
      embeddings_(std::move(embeddings)),
      blocks_(std::move(blocks)),
      final_norm_(std::move(final_norm)),
      output_head_(std::move(output_head)) {
    config_.validate();
    const std::size_t d = config_.d_model;
    if (embeddings_.rows() != config_.vocab_size || embeddings_.cols() != d) {
        throw DataError("DecoderModel: embeddings are " +
                        shape_string(embeddings_.rows(), embeddings_.cols()) + ", expected " +
                        shape_string(config_.vocab_size, d));
    }
    if (output_head_.rows() != config_.vocab_size || output_head_.cols() != d) {
        throw DataError("DecoderModel: output head is " +
                        shape_string(output_head_.rows(), output_head_.cols()) + ", expected " +
                        shape_string(config_.vocab_size, d));
    }
    if (final_norm_.size() != d) {
        throw DataError("DecoderModel: final norm has wrong length");
    }
    if (blocks_.size() != config_.n_layers) {
        throw DataError("DecoderModel: " + std::to_string(blocks_.size()) + " blocks for n_layers=" +
                        std::to_string(config_.n_layers));
    }
    for (std::size_t m = 0; m < blocks_.size(); ++m) {
        const Block& b = blocks_[m];
        if (b.attn_norm.size() != d || b.mlp_norm.size() != d) {
            throw DataError("DecoderModel: block " + std::to_string(m) + " norm has wrong length");
        }
        for (const LayerKind kind : kLayerKinds) {
            const LinearLayer& layer = b.linear[kind_index(kind)];
            if (const auto* f = std::get_if<FactoredLayer>(&layer)) {
                f->validate();
            }
            const LayerShape want = layer_shape(config_, kind);
            const LayerShape got = shape_of(layer);
            if (want.d_out != got.d_out || want.d_in != got.d_in) {
                throw DataError("DecoderModel: " + LayerId{m, kind}.name() + " is " +
                                shape_string(got.d_out, got.d_in) + ", expected " +
                                shape_string(want.d_out, want.d_in));
            }
        }
    }
}

const LinearLayer& DecoderModel::layer(const LayerId& id) const {
    if (id.module_index >= blocks_.size()) {
        throw DataError("unknown layer " + id.name() + " (model has " +
                        std::to_string(blocks_.size()) + " modules)");
    }
    return blocks_[id.module_index].linear[kind_index(id.kind)];
}

std::vector<LayerId> DecoderModel::layer_ids() const {
    std::vector<LayerId> ids;
    ids.reserve(blocks_.size() * kLayerKinds.size());
    for (std::size_t m = 0; m < blocks_.size(); ++m) {
        for (const LayerKind kind : kLayerKinds) {
            ids.push_back({m, kind});
        }
    }
    return ids;
}

void DecoderModel::check_tokens(std::span<const Token> tokens) const {
    if (tokens.empty()) {
        throw DataError("forward: empty token sequence");
    }
    if (tokens.size() > config_.max_seq_len) {
        throw DataError("forward: sequence length " + std::to_string(tokens.size()) +
                        " exceeds max_seq_len " + std::to_string(config_.max_seq_len));
    }
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (tokens[t] >= config_.vocab_size) {
            throw DataError("forward: token id " + std::to_string(tokens[t]) + " at position " +
                            std::to_string(t) + " is outside the vocabulary of " +
                            std::to_string(config_.vocab_size));
        }
    }
}

Matrix DecoderModel::forward(std::span<const Token> tokens, const ActivationObserver& observer) const {
    check_tokens(tokens);
    const std::size_t d = config_.d_model;
    const std::size_t t_len = tokens.size();

    Matrix x(d, t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
        const auto e = embeddings_.row(tokens[t]);
        for (std::size_t i = 0; i < d; ++i) {
            x(i, t) = e[i];
        }
    }

    auto linear = [&](std::size_t m, LayerKind kind, const Matrix& in) {
        Matrix out = apply_layer(blocks_[m].linear[kind_index(kind)], in);
        if (observer) {
            observer(LayerId{m, kind}, in, out);
        }
        return out;
    };

    for (std::size_t m = 0; m < blocks_.size(); ++m) {
        const Block& block = blocks_[m];
        const Matrix h = rms_norm(x, block.attn_norm, config_.norm_epsilon);
        Matrix q = linear(m, LayerKind::q, h);
        Matrix k = linear(m, LayerKind::k, h);
        const Matrix v = linear(m, LayerKind::v, h);
        apply_rope(q, config_.head_dim(), config_.rope_base);
        apply_rope(k, config_.head_dim(), config_.rope_base);
        const Matrix ctx = attention(q, k, v, config_.n_heads);
        add_in_place(x, linear(m, LayerKind::o, ctx));

        const Matrix h2 = rms_norm(x, block.mlp_norm, config_.norm_epsilon);
        Matrix gate = linear(m, LayerKind::g, h2);
        const Matrix up = linear(m, LayerKind::u, h2);
        auto gd = gate.data();
        const auto ud = up.data();
        for (std::size_t i = 0; i < gd.size(); ++i) {
            const double z = gd[i];
            gd[i] = z / (1.0 + std::exp(-z)) * ud[i];
        }
        add_in_place(x, linear(m, LayerKind::d, gate));
    }

    const Matrix final_t = rms_norm(x, final_norm_, config_.norm_epsilon).transposed();
    Matrix logits(t_len, config_.vocab_size);
    for (std::size_t t = 0; t < t_len; ++t) {
        const auto f = final_t.row(t);
        auto dst = logits.row(t);
        for (std::size_t vtok = 0; vtok < config_.vocab_size; ++vtok) {
            const auto w = output_head_.row(vtok);
            double acc = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                acc += w[i] * f[i];
            }
            dst[vtok] = acc;
        }
    }
    return logits;
}

void DecoderModel::set_layer(const LayerId& id, LinearLayer layer) {
    (void)this->layer(id);
    if (const auto* f = std::get_if<FactoredLayer>(&layer)) {
        f->validate();
    }
    const LayerShape want = layer_shape(config_, id.kind);
    const LayerShape got = shape_of(layer);
    if (want.d_out != got.d_out || want.d_in != got.d_in) {
        throw DataError("set_layer: " + id.name() + " expects " + shape_string(want.d_out, want.d_in) +
                        ", replacement is " + shape_string(got.d_out, got.d_in));
    }
    blocks_[id.module_index].linear[kind_index(id.kind)] = std::move(layer);
}

void DecoderModel::set_output_head(Matrix head) {
    if (head.rows() != config_.vocab_size || head.cols() != config_.d_model) {
        throw DataError("set_output_head: shape mismatch");
    }
    output_head_ = std::move(head);
}

Capture capture(const DecoderModel& model, std::span<const Token> tokens, const LayerId& id) {
    (void)model.layer(id);
    Capture out;
    model.forward(tokens, [&](const LayerId& seen, const Matrix& x, const Matrix& y) {
        if (seen == id) {
            out.x = x;
            out.y = y;
        }
    });
    return out;
}

DecoderModel replace_layer(DecoderModel model, const LayerId& id, FactoredLayer factored) {
    model.set_layer(id, std::move(factored));
    return model;
}

uint64_t LayerFootprint::params() const {
    const uint64_t d2 = shape.d_out;
    const uint64_t d1 = shape.d_in;
    if (!rank) {
        return d1 * d2;
    }
    return static_cast<uint64_t>(*rank) * (d1 + d2) + (has_bias ? d2 : 0);
}

uint64_t LayerFootprint::macs_per_token() const {
    const uint64_t d2 = shape.d_out;
    const uint64_t d1 = shape.d_in;
    return rank ? static_cast<uint64_t>(*rank) * (d1 + d2) : d1 * d2;
}

std::vector<LayerFootprint> dense_footprints(const ModelConfig& config) {
    std::vector<LayerFootprint> out;
    out.reserve(config.n_layers * kLayerKinds.size());
    for (std::size_t m = 0; m < config.n_layers; ++m) {
        for (const LayerKind kind : kLayerKinds) {
            out.push_back({LayerId{m, kind}, layer_shape(config, kind), std::nullopt, false});
        }
    }
    return out;
}

std::vector<LayerFootprint> footprints(const DecoderModel& model) {
    std::vector<LayerFootprint> out;
    for (const LayerId& id : model.layer_ids()) {
        const LinearLayer& layer = model.layer(id);
        LayerFootprint fp{id, shape_of(layer), std::nullopt, false};
        if (const auto* f = std::get_if<FactoredLayer>(&layer)) {
            fp.rank = f->rank();
            fp.has_bias = f->bias.has_value();
        }
        out.push_back(fp);
    }
    return out;
}

ParamReport count_params(const ModelConfig& config, std::span<const LayerFootprint> layers) {
    ParamReport r;
    for (const LayerFootprint& fp : layers) {
        const uint64_t p = fp.params();
        r.per_layer.emplace_back(fp.id, p);
        r.linear += p;
    }
    const uint64_t vocab = config.vocab_size;
    const uint64_t d = config.d_model;
    r.embeddings = vocab * d;
    r.head = vocab * d;
    r.norms = (2 * static_cast<uint64_t>(config.n_layers) + 1) * d;
    return r;
}

ParamReport count_params(const DecoderModel& model) {
    const auto fps = footprints(model);
    return count_params(model.config(), fps);
}

MacReport count_macs(const ModelConfig& config, std::span<const LayerFootprint> layers,
                     std::size_t seq_len) {
    MacReport r;
    const uint64_t t_len = seq_len;
    for (const LayerFootprint& fp : layers) {
        r.linear += fp.macs_per_token() * t_len;
    }
    r.attention = static_cast<uint64_t>(config.n_layers) * t_len * (t_len + 1) * config.d_model;
    r.head = static_cast<uint64_t>(config.vocab_size) * config.d_model * t_len;
    return r;
}

MacReport count_macs(const DecoderModel& model, std::size_t seq_len) {
    const auto fps = footprints(model);
    return count_macs(model.config(), fps, seq_len);
}

DecoderModel init_random_model(const ModelConfig& config, uint64_t seed, const InitOptions& options) {
    config.validate();
    SplitMix64 rng(derive_seed(seed, "init_random_model"));
    const std::size_t d = config.d_model;

    Matrix embeddings(config.vocab_size, d);
    for (double& x : embeddings.data()) {
        x = rng.normal();
    }
    std::vector<Block> blocks(config.n_layers);
    for (Block& block : blocks) {
        block.attn_norm.assign(d, 1.0);
        block.mlp_norm.assign(d, 1.0);
        for (const LayerKind kind : kLayerKinds) {
            const LayerShape s = layer_shape(config, kind);
            block.linear[kind_index(kind)] =
                DenseLayer{random_weight(rng, s.d_out, s.d_in, options.spectral_decay)};
        }
    }
    Matrix head(config.vocab_size, d);
    const double head_scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& x : head.data()) {
        x = rng.normal() * head_scale;
    }
    return DecoderModel(config, std::move(embeddings), std::move(blocks), Vector(d, 1.0),
                        std::move(head));
}

} // namespace lrc
