// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrc/bundle.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "lrc/errors.hpp"
#include "lrc/rng.hpp"

namespace lrc {

namespace {

constexpr std::string_view kMagic = "LRCB";
constexpr std::size_t kPreamble = 16;

std::size_t align8(std::size_t n) { return (n + 7) / 8 * 8; }

std::size_t dtype_size(DType dtype) { return dtype == DType::f32 ? 4 : 8; }

void put_le(std::string& out, uint64_t v, std::size_t bytes) {
    for (std::size_t i = 0; i < bytes; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

uint64_t get_le(std::string_view in, std::size_t pos, std::size_t bytes) {
    uint64_t v = 0;
    for (std::size_t i = 0; i < bytes; ++i) {
        v |= static_cast<uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    }
    return v;
}

void encode_value(std::string& out, double v, DType dtype) {
    if (dtype == DType::f32) {
        const float f = static_cast<float>(v);
        uint32_t bits = 0;
        std::memcpy(&bits, &f, sizeof(bits));
        put_le(out, bits, 4);
    } else {
        uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof(bits));
        put_le(out, bits, 8);
    }
}

double decode_value(std::string_view in, std::size_t pos, DType dtype) {
    if (dtype == DType::f32) {
        const auto bits = static_cast<uint32_t>(get_le(in, pos, 4));
        float f = 0.0F;
        std::memcpy(&f, &bits, sizeof(f));
        return f;
    }
    const uint64_t bits = get_le(in, pos, 8);
    double d = 0.0;
    std::memcpy(&d, &bits, sizeof(d));
    return d;
}

Tensor matrix_tensor(const Matrix& m, DType dtype) {
    Tensor t{{m.rows(), m.cols()}, dtype, {}};
    t.values.assign(m.data().begin(), m.data().end());
    return t;
}

Tensor vector_tensor(const Vector& v, DType dtype) { return Tensor{{v.size()}, dtype, v}; }

Matrix tensor_matrix(const Tensor& t, const std::string& name) {
    if (t.shape.size() != 2) {
        throw DataError("bundle: tensor " + name + " must be 2-D");
    }
    return Matrix(t.shape[0], t.shape[1], t.values);
}

Vector tensor_vector(const Tensor& t, const std::string& name) {
    if (t.shape.size() != 1) {
        throw DataError("bundle: tensor " + name + " must be 1-D");
    }
    return t.values;
}

std::string join(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names) {
        out += out.empty() ? n : ", " + n;
    }
    return out;
}

} // namespace

std::string_view dtype_name(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

DType parse_dtype(std::string_view name) {
    if (name == "f32") {
        return DType::f32;
    }
    if (name == "f64") {
        return DType::f64;
    }
    throw DataError("unknown dtype '" + std::string(name) + "'");
}

std::size_t Tensor::element_count() const {
    std::size_t n = 1;
    for (const std::size_t s : shape) {
        n *= s;
    }
    return n;
}

std::string TensorBundle::serialize() const {
    nlohmann::json dir = nlohmann::json::object();
    std::size_t offset = 0;
    for (const auto& [name, t] : tensors) {
        if (t.values.size() != t.element_count()) {
            throw DataError("bundle: tensor " + name + " holds " + std::to_string(t.values.size()) +
                            " values for its shape");
        }
        offset = align8(offset);
        dir[name] = {{"dtype", std::string(dtype_name(t.dtype))}, {"offset", offset}, {"shape", t.shape}};
        offset += t.element_count() * dtype_size(t.dtype);
    }
    const std::size_t payload_size = align8(offset);

    nlohmann::json header = {{"format_version", kBundleVersion},
                             {"kind", kind},
                             {"metadata", metadata},
                             {"tensors", std::move(dir)}};
    std::string header_text = header.dump();
    header_text.resize(align8(kPreamble + header_text.size()) - kPreamble, ' ');

    std::string out;
    out.reserve(kPreamble + header_text.size() + payload_size);
    out.append(kMagic);
    put_le(out, kBundleVersion, 4);
    put_le(out, header_text.size(), 8);
    out.append(header_text);
    const std::size_t payload_start = out.size();
    for (const auto& [name, t] : tensors) {
        out.resize(payload_start + align8(out.size() - payload_start), '\0');
        for (const double v : t.values) {
            encode_value(out, v, t.dtype);
        }
    }
    out.resize(payload_start + payload_size, '\0');
    return out;
}

TensorBundle TensorBundle::parse(std::string_view bytes) {
    if (bytes.size() < kPreamble || bytes.substr(0, 4) != kMagic) {
        throw DataError("bundle: bad magic (not an LRCB file)");
    }
    const uint64_t version = get_le(bytes, 4, 4);
    if (version != kBundleVersion) {
        throw DataError("bundle: unsupported format version " + std::to_string(version));
    }
    const uint64_t header_len = get_le(bytes, 8, 8);
    if (header_len > bytes.size() - kPreamble || (kPreamble + header_len) % 8 != 0) {
        throw DataError("bundle: invalid header length");
    }
    const std::size_t payload_start = kPreamble + header_len;
    const std::string_view payload = bytes.substr(payload_start);

    TensorBundle b;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(kPreamble, header_len));
        if (header.at("format_version").get<uint64_t>() != kBundleVersion) {
            throw DataError("bundle: header format_version mismatch");
        }
        b.kind = header.at("kind").get<std::string>();
        b.metadata = header.value("metadata", nlohmann::json::object());

        struct Span {
            std::size_t begin;
            std::size_t end;
            std::string name;
        };
        std::vector<Span> spans;
        for (const auto& [name, entry] : header.at("tensors").items()) {
            Tensor t;
            t.dtype = parse_dtype(entry.at("dtype").get<std::string>());
            t.shape = entry.at("shape").get<std::vector<std::size_t>>();
            if (t.shape.empty()) {
                throw DataError("bundle: tensor " + name + " has an empty shape");
            }
            const auto offset = entry.at("offset").get<std::size_t>();
            if (offset % 8 != 0) {
                throw DataError("bundle: tensor " + name + " offset is not 8-byte aligned");
            }
            const std::size_t size = t.element_count() * dtype_size(t.dtype);
            if (offset > payload.size() || size > payload.size() - offset) {
                throw DataError("bundle: tensor " + name + " extends past the payload");
            }
            t.values.resize(t.element_count());
            for (std::size_t i = 0; i < t.values.size(); ++i) {
                t.values[i] = decode_value(payload, offset + i * dtype_size(t.dtype), t.dtype);
            }
            spans.push_back({offset, offset + size, name});
            b.tensors.emplace(name, std::move(t));
        }
        std::sort(spans.begin(), spans.end(), [](const Span& x, const Span& y) { return x.begin < y.begin; });
        for (std::size_t i = 1; i < spans.size(); ++i) {
            if (spans[i].begin < spans[i - 1].end) {
                throw DataError("bundle: tensors " + spans[i - 1].name + " and " + spans[i].name + " overlap");
            }
        }
        const std::size_t expected = spans.empty() ? 0 : align8(spans.back().end);
        if (payload.size() != expected) {
            throw DataError("bundle: payload is " + std::to_string(payload.size()) +
                            " bytes, tensor directory declares " + std::to_string(expected));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bundle: malformed header: ") + e.what());
    }
    return b;
}

std::string read_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_binary(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw DataError("write failed for " + path.string());
    }
}

TensorBundle load_bundle(const std::filesystem::path& path) {
    return TensorBundle::parse(read_binary(path));
}

void save_bundle(const std::filesystem::path& path, const TensorBundle& bundle) {
    write_binary(path, bundle.serialize());
}

std::string content_hash(std::string_view bytes) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
    return buf;
}

nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model},         {"n_layers", c.n_layers},
            {"n_heads", c.n_heads},       {"d_ff", c.d_ff},               {"max_seq_len", c.max_seq_len},
            {"norm_epsilon", c.norm_epsilon}, {"rope_base", c.rope_base}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.vocab_size = j.at("vocab_size").get<std::size_t>();
        c.d_model = j.at("d_model").get<std::size_t>();
        c.n_layers = j.at("n_layers").get<std::size_t>();
        c.n_heads = j.at("n_heads").get<std::size_t>();
        c.d_ff = j.at("d_ff").get<std::size_t>();
        c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
        c.norm_epsilon = j.value("norm_epsilon", c.norm_epsilon);
        c.rope_base = j.value("rope_base", c.rope_base);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model config: ") + e.what());
    }
    return c;
}

TensorBundle model_to_bundle(const DecoderModel& model, DType dtype, std::string_view tokenizer) {
    TensorBundle b;
    b.kind = "model";
    b.metadata = {{"config", config_to_json(model.config())}, {"tokenizer", std::string(tokenizer)}};
    b.tensors["tok_embeddings"] = matrix_tensor(model.embeddings(), dtype);
    b.tensors["output"] = matrix_tensor(model.output_head(), dtype);
    b.tensors["norm"] = vector_tensor(model.final_norm(), dtype);
    for (std::size_t m = 0; m < model.blocks().size(); ++m) {
        const Block& block = model.blocks()[m];
        const std::string prefix = "layers." + std::to_string(m) + ".";
        b.tensors[prefix + "attn_norm"] = vector_tensor(block.attn_norm, dtype);
        b.tensors[prefix + "mlp_norm"] = vector_tensor(block.mlp_norm, dtype);
        for (const LayerKind kind : kLayerKinds) {
            const LayerId id{m, kind};
            const std::string base = id.name() + ".";
            const LinearLayer& layer = model.layer(id);
            if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
                b.tensors[base + "weight"] = matrix_tensor(dense->weight, dtype);
            } else {
                const auto& f = std::get<FactoredLayer>(layer);
                b.tensors[base + "w_down"] = matrix_tensor(f.w_down, dtype);
                b.tensors[base + "w_up"] = matrix_tensor(f.w_up, dtype);
                if (f.bias) {
                    b.tensors[base + "bias"] = vector_tensor(*f.bias, dtype);
                }
            }
        }
    }
    return b;
}

DecoderModel model_from_bundle(const TensorBundle& bundle) {
    if (bundle.kind != "model") {
        throw DataError("bundle kind is '" + bundle.kind + "', expected 'model'");
    }
    if (!bundle.metadata.contains("config")) {
        throw DataError("model bundle has no config in metadata");
    }
    const ModelConfig config = config_from_json(bundle.metadata["config"]);
    try {
        config.validate();
    } catch (const ConfigError& e) {
        throw DataError(e.what());
    }

    std::vector<std::string> missing;
    std::set<std::string> used;
    auto get = [&](const std::string& name) -> const Tensor* {
        const auto it = bundle.tensors.find(name);
        if (it == bundle.tensors.end()) {
            missing.push_back(name);
            return nullptr;
        }
        used.insert(name);
        return &it->second;
    };

    const Tensor* emb = get("tok_embeddings");
    const Tensor* out = get("output");
    const Tensor* norm = get("norm");
    std::vector<Block> blocks(config.n_layers);
    for (std::size_t m = 0; m < config.n_layers; ++m) {
        const std::string prefix = "layers." + std::to_string(m) + ".";
        const Tensor* an = get(prefix + "attn_norm");
        const Tensor* mn = get(prefix + "mlp_norm");
        if (an && mn) {
            blocks[m].attn_norm = tensor_vector(*an, prefix + "attn_norm");
            blocks[m].mlp_norm = tensor_vector(*mn, prefix + "mlp_norm");
        }
        for (const LayerKind kind : kLayerKinds) {
            const std::string base = LayerId{m, kind}.name() + ".";
            auto& slot = blocks[m].linear[static_cast<std::size_t>(kind)];
            if (bundle.tensors.contains(base + "weight")) {
                slot = DenseLayer{tensor_matrix(*get(base + "weight"), base + "weight")};
                continue;
            }
            const Tensor* down = get(base + "w_down");
            const Tensor* up = get(base + "w_up");
            if (!down || !up) {
                continue;
            }
            FactoredLayer f{tensor_matrix(*down, base + "w_down"), tensor_matrix(*up, base + "w_up"), std::nullopt};
            if (bundle.tensors.contains(base + "bias")) {
                f.bias = tensor_vector(*get(base + "bias"), base + "bias");
            }
            slot = std::move(f);
        }
    }
    std::vector<std::string> unexpected;
    for (const auto& [name, t] : bundle.tensors) {
        if (!used.contains(name)) {
            unexpected.push_back(name);
        }
    }
    if (!missing.empty() || !unexpected.empty()) {
        std::string msg = "model bundle tensor set does not match the architecture;";
        if (!missing.empty()) {
            msg += " missing: " + join(missing) + ";";
        }
        if (!unexpected.empty()) {
            msg += " unexpected: " + join(unexpected) + ";";
        }
        throw DataError(msg);
    }
    return DecoderModel(config, tensor_matrix(*emb, "tok_embeddings"), std::move(blocks),
                        tensor_vector(*norm, "norm"), tensor_matrix(*out, "output"));
}

std::string bundle_tokenizer(const TensorBundle& bundle) {
    return bundle.metadata.value("tokenizer", std::string("byte"));
}

DType bundle_dtype(const TensorBundle& bundle) {
    const auto it = bundle.tensors.find("tok_embeddings");
    return it == bundle.tensors.end() ? DType::f32 : it->second.dtype;
}

TensorBundle gram_bank_to_bundle(const GramBank& bank, const ModelConfig& config,
                                 const nlohmann::json& calibration_info) {
    TensorBundle b;
    b.kind = "gram_bank";
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [id, acc] : bank) {
        b.tensors[id.name() + ".gram"] = matrix_tensor(acc.gram(), DType::f64);
        b.tensors[id.name() + ".input_sum"] = vector_tensor(acc.input_sum(), DType::f64);
        counts[id.name()] = acc.sample_count();
    }
    b.metadata = {{"config", config_to_json(config)},
                  {"calibration", calibration_info},
                  {"sample_counts", std::move(counts)}};
    return b;
}

GramBank gram_bank_from_bundle(const TensorBundle& bundle) {
    if (bundle.kind != "gram_bank") {
        throw DataError("bundle kind is '" + bundle.kind + "', expected 'gram_bank'");
    }
    GramBank bank;
    const auto& counts = bundle.metadata.at("sample_counts");
    for (const auto& [name, count] : counts.items()) {
        // name = layers.<m>.<kind>
        const std::size_t first = name.find('.');
        const std::size_t second = name.find('.', first + 1);
        if (name.substr(0, first) != "layers" || second == std::string::npos) {
            throw DataError("gram bank: bad layer name " + name);
        }
        LayerId id;
        id.module_index = std::stoul(name.substr(first + 1, second - first - 1));
        id.kind = parse_kind(name.substr(second + 1));
        const auto g = bundle.tensors.find(name + ".gram");
        const auto s = bundle.tensors.find(name + ".input_sum");
        if (g == bundle.tensors.end() || s == bundle.tensors.end()) {
            throw DataError("gram bank: missing tensors for " + name);
        }
        bank.emplace(id, GramAccumulator::from_parts(tensor_matrix(g->second, name + ".gram"),
                                                     tensor_vector(s->second, name + ".input_sum"),
                                                     count.get<uint64_t>()));
    }
    return bank;
}

} // namespace lrc
