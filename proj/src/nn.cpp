// SPDX-License-Identifier: Apache-2.0

#include "newsrec/nn.hpp"

#include "newsrec/safetensors.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace newsrec::nn {

namespace {

ag::Matrix normal_matrix(ag::Index rows, ag::Index cols, std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    ag::Matrix m(rows, cols);
    for (ag::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = dist(rng);
    }
    return m;
}

}  // namespace

Linear Linear::init(ag::Index in, ag::Index out, std::mt19937_64& rng, double stddev) {
    return Linear{Tensor::parameter(normal_matrix(out, in, rng, stddev)),
                  Tensor::parameter(ag::Matrix::Zero(1, out))};
}

Linear Linear::xavier(ag::Index in, ag::Index out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    ag::Matrix w(out, in);
    for (ag::Index i = 0; i < w.size(); ++i) {
        w.data()[i] = dist(rng);
    }
    return Linear{Tensor::parameter(std::move(w)), Tensor::parameter(ag::Matrix::Zero(1, out))};
}

Tensor Linear::operator()(const Tensor& x) const { return ag::add_row(ag::matmul_nt(x, weight), bias); }

void Linear::collect(ag::ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight, false});
    out.push_back({prefix + ".bias", bias, true});
}

LayerNorm LayerNorm::init(ag::Index dim, double eps) {
    return LayerNorm{Tensor::parameter(ag::Matrix::Ones(1, dim)), Tensor::parameter(ag::Matrix::Zero(1, dim)), eps};
}

Tensor LayerNorm::operator()(const Tensor& x) const { return ag::layer_norm_rows(x, gamma, beta, eps); }

void LayerNorm::collect(ag::ParameterList& out, const std::string& weight_name, const std::string& bias_name) const {
    out.push_back({weight_name, gamma, true});
    out.push_back({bias_name, beta, true});
}

TransformerConfig TransformerConfig::from_hf_json(const nlohmann::json& j) {
    TransformerConfig c;
    const std::string type = j.value("model_type", "distilbert");
    if (type == "distilbert") {
        c.flavor = EncoderFlavor::DistilBert;
        c.hidden = j.at("dim").get<int>();
        c.layers = j.at("n_layers").get<int>();
        c.heads = j.at("n_heads").get<int>();
        c.ffn = j.at("hidden_dim").get<int>();
        c.type_vocab_size = 0;
        if (j.value("sinusoidal_pos_embds", false)) {
            throw std::runtime_error("sinusoidal DistilBERT position embeddings are not supported");
        }
        // DistilBERT hard-codes its layer norm epsilon.
        c.layer_norm_eps = 1e-12;
    } else if (type == "bert") {
        c.flavor = EncoderFlavor::Bert;
        c.hidden = j.at("hidden_size").get<int>();
        c.layers = j.at("num_hidden_layers").get<int>();
        c.heads = j.at("num_attention_heads").get<int>();
        c.ffn = j.at("intermediate_size").get<int>();
        c.type_vocab_size = j.value("type_vocab_size", 2);
        c.layer_norm_eps = j.value("layer_norm_eps", 1e-12);
    } else {
        throw std::runtime_error("unsupported encoder model_type '" + type + "'");
    }
    const std::string act = j.value(type == "bert" ? "hidden_act" : "activation", "gelu");
    if (act != "gelu") {
        throw std::runtime_error("unsupported activation '" + act + "'");
    }
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_positions = j.value("max_position_embeddings", 512);
    c.init_std = j.value("initializer_range", 0.02);
    return c;
}

nlohmann::json TransformerConfig::to_hf_json() const {
    if (flavor == EncoderFlavor::DistilBert) {
        return {{"model_type", "distilbert"}, {"activation", "gelu"},     {"dim", hidden},
                {"n_layers", layers},        {"n_heads", heads},          {"hidden_dim", ffn},
                {"vocab_size", vocab_size},  {"max_position_embeddings", max_positions},
                {"sinusoidal_pos_embds", false}, {"initializer_range", init_std}, {"pad_token_id", 0}};
    }
    return {{"model_type", "bert"},           {"hidden_act", "gelu"},        {"hidden_size", hidden},
            {"num_hidden_layers", layers},    {"num_attention_heads", heads}, {"intermediate_size", ffn},
            {"vocab_size", vocab_size},       {"max_position_embeddings", max_positions},
            {"type_vocab_size", type_vocab_size}, {"layer_norm_eps", layer_norm_eps},
            {"initializer_range", init_std},  {"pad_token_id", 0}};
}

TransformerEncoder::TransformerEncoder(const TransformerConfig& config, std::mt19937_64& rng) : config_(config) {
    if (config.vocab_size <= 0 || config.hidden <= 0 || config.layers <= 0 || config.heads <= 0) {
        throw std::invalid_argument("transformer config: sizes must be positive");
    }
    if (config.hidden % config.heads != 0) {
        throw std::invalid_argument("transformer config: hidden size must be divisible by heads");
    }
    const double s = config.init_std;
    word_embeddings_ = Tensor::parameter(normal_matrix(config.vocab_size, config.hidden, rng, s));
    // [PAD] (id 0) embedding starts at zero, as in the reference initialisation.
    word_embeddings_.mutable_value().row(0).setZero();
    position_embeddings_ = Tensor::parameter(normal_matrix(config.max_positions, config.hidden, rng, s));
    if (config.flavor == EncoderFlavor::Bert) {
        token_type_embeddings_ = Tensor::parameter(normal_matrix(config.type_vocab_size, config.hidden, rng, s));
    }
    embedding_norm_ = LayerNorm::init(config.hidden, config.layer_norm_eps);
    for (int i = 0; i < config.layers; ++i) {
        Block b{
            Linear::init(config.hidden, config.hidden, rng, s), Linear::init(config.hidden, config.hidden, rng, s),
            Linear::init(config.hidden, config.hidden, rng, s), Linear::init(config.hidden, config.hidden, rng, s),
            LayerNorm::init(config.hidden, config.layer_norm_eps),
            Linear::init(config.hidden, config.ffn, rng, s),    Linear::init(config.ffn, config.hidden, rng, s),
            LayerNorm::init(config.hidden, config.layer_norm_eps),
        };
        blocks_.push_back(std::move(b));
    }
}

Tensor multi_head_self_attention(const Tensor& x, const Linear& query, const Linear& key, const Linear& value,
                                 int heads) {
    const Tensor q = query(x);
    const Tensor k = key(x);
    const Tensor v = value(x);
    const ag::Index dim = q.cols();
    if (heads <= 0 || dim % heads != 0) {
        throw std::invalid_argument("attention width must be divisible by the head count");
    }
    const ag::Index head_dim = dim / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Tensor> contexts;
    contexts.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const Tensor qh = ag::slice_cols(q, h * head_dim, head_dim);
        const Tensor kh = ag::slice_cols(k, h * head_dim, head_dim);
        const Tensor vh = ag::slice_cols(v, h * head_dim, head_dim);
        const Tensor probs = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt));
        contexts.push_back(ag::matmul(probs, vh));
    }
    return heads == 1 ? contexts.front() : ag::concat_cols(contexts);
}

Tensor TransformerEncoder::forward(std::span<const std::int32_t> token_ids,
                                   std::span<const std::int32_t> positions) const {
    if (token_ids.empty() || token_ids.size() != positions.size()) {
        throw std::invalid_argument("transformer forward: ids and positions must be non-empty and aligned");
    }
    std::vector<ag::Index> ids(token_ids.begin(), token_ids.end());
    std::vector<ag::Index> pos(positions.begin(), positions.end());
    for (auto p : pos) {
        if (p < 0 || p >= config_.max_positions) {
            throw std::out_of_range("transformer forward: position exceeds max_position_embeddings");
        }
    }
    Tensor x = ag::add(ag::gather_rows(word_embeddings_, ids), ag::gather_rows(position_embeddings_, pos));
    if (config_.flavor == EncoderFlavor::Bert) {
        std::vector<ag::Index> types(ids.size(), 0);
        x = ag::add(x, ag::gather_rows(token_type_embeddings_, types));
    }
    x = embedding_norm_(x);
    for (const auto& b : blocks_) {
        const Tensor context = multi_head_self_attention(x, b.query, b.key, b.value, config_.heads);
        x = b.attn_norm(ag::add(x, b.attn_out(context)));
        const Tensor ffn = b.ffn_out(ag::gelu(b.ffn_in(x)));
        x = b.out_norm(ag::add(x, ffn));
    }
    return x;
}

void TransformerEncoder::collect(ag::ParameterList& out) const {
    if (config_.flavor == EncoderFlavor::DistilBert) {
        out.push_back({"embeddings.word_embeddings.weight", word_embeddings_, false});
        out.push_back({"embeddings.position_embeddings.weight", position_embeddings_, false});
        embedding_norm_.collect(out, "embeddings.LayerNorm.weight", "embeddings.LayerNorm.bias");
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const std::string p = "transformer.layer." + std::to_string(i) + ".";
            const auto& b = blocks_[i];
            b.query.collect(out, p + "attention.q_lin");
            b.key.collect(out, p + "attention.k_lin");
            b.value.collect(out, p + "attention.v_lin");
            b.attn_out.collect(out, p + "attention.out_lin");
            b.attn_norm.collect(out, p + "sa_layer_norm.weight", p + "sa_layer_norm.bias");
            b.ffn_in.collect(out, p + "ffn.lin1");
            b.ffn_out.collect(out, p + "ffn.lin2");
            b.out_norm.collect(out, p + "output_layer_norm.weight", p + "output_layer_norm.bias");
        }
        return;
    }
    out.push_back({"embeddings.word_embeddings.weight", word_embeddings_, false});
    out.push_back({"embeddings.position_embeddings.weight", position_embeddings_, false});
    out.push_back({"embeddings.token_type_embeddings.weight", token_type_embeddings_, false});
    embedding_norm_.collect(out, "embeddings.LayerNorm.weight", "embeddings.LayerNorm.bias");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const std::string p = "encoder.layer." + std::to_string(i) + ".";
        const auto& b = blocks_[i];
        b.query.collect(out, p + "attention.self.query");
        b.key.collect(out, p + "attention.self.key");
        b.value.collect(out, p + "attention.self.value");
        b.attn_out.collect(out, p + "attention.output.dense");
        b.attn_norm.collect(out, p + "attention.output.LayerNorm.weight", p + "attention.output.LayerNorm.bias");
        b.ffn_in.collect(out, p + "intermediate.dense");
        b.ffn_out.collect(out, p + "output.dense");
        b.out_norm.collect(out, p + "output.LayerNorm.weight", p + "output.LayerNorm.bias");
    }
}

TransformerEncoder TransformerEncoder::load_pretrained(const std::filesystem::path& dir) {
    std::ifstream cfg_in(dir / "config.json");
    if (!cfg_in) {
        throw std::runtime_error("missing " + (dir / "config.json").string());
    }
    const auto config = TransformerConfig::from_hf_json(nlohmann::json::parse(cfg_in));
    std::mt19937_64 rng(0);
    TransformerEncoder encoder(config, rng);
    auto stored = safetensors::load(dir / "model.safetensors");

    // Older checkpoints use gamma/beta for layer norms; task-model exports
    // carry a "bert." or "distilbert." prefix.
    std::map<std::string, safetensors::StoredTensor> renamed;
    for (auto& [name, t] : stored) {
        std::string key = name;
        for (const std::string prefix : {"distilbert.", "bert."}) {
            if (key.starts_with(prefix)) {
                key = key.substr(prefix.size());
            }
        }
        if (key.ends_with(".gamma")) key = key.substr(0, key.size() - 6) + ".weight";
        if (key.ends_with(".beta")) key = key.substr(0, key.size() - 5) + ".bias";
        renamed.emplace(std::move(key), std::move(t));
    }
    ag::ParameterList params;
    encoder.collect(params);
    safetensors::assign(params, renamed);
    return encoder;
}

void TransformerEncoder::save_pretrained(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream cfg(dir / "config.json");
    cfg << config_.to_hf_json().dump(2) << "\n";
    ag::ParameterList params;
    collect(params);
    safetensors::save(dir / "model.safetensors", params, safetensors::DType::F64);
}

}  // namespace newsrec::nn
