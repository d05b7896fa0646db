// SPDX-License-Identifier: Apache-2.0
//
// Layers shared by the news and user encoders, and a BERT-family transformer
// encoder whose parameter names follow the Hugging Face checkpoints so that
// pretrained DistilBERT/BERT weights load directly.
#pragma once

#include "newsrec/autograd.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>

namespace newsrec::nn {

using ag::Tensor;

struct Linear {
    Tensor weight;  // (out x in)
    Tensor bias;    // (1 x out)

    static Linear init(ag::Index in, ag::Index out, std::mt19937_64& rng, double stddev);
    static Linear xavier(ag::Index in, ag::Index out, std::mt19937_64& rng);

    Tensor operator()(const Tensor& x) const;
    void collect(ag::ParameterList& out, const std::string& prefix) const;
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;
    double eps = 1e-12;

    static LayerNorm init(ag::Index dim, double eps);
    Tensor operator()(const Tensor& x) const;
    void collect(ag::ParameterList& out, const std::string& weight_name, const std::string& bias_name) const;
};

enum class EncoderFlavor { DistilBert, Bert };

struct TransformerConfig {
    EncoderFlavor flavor = EncoderFlavor::DistilBert;
    int vocab_size = 0;
    int hidden = 64;
    int layers = 2;
    int heads = 4;
    int ffn = 128;
    int max_positions = 512;
    int type_vocab_size = 2;
    double layer_norm_eps = 1e-12;
    double init_std = 0.02;

    /// Reads a Hugging Face config.json (model_type distilbert or bert).
    static TransformerConfig from_hf_json(const nlohmann::json& j);
    nlohmann::json to_hf_json() const;
};

class TransformerEncoder {
public:
    TransformerEncoder() = default;
    TransformerEncoder(const TransformerConfig& config, std::mt19937_64& rng);

    /// Hidden states (n x hidden) for the given token ids and absolute positions.
    Tensor forward(std::span<const std::int32_t> token_ids, std::span<const std::int32_t> positions) const;

    const TransformerConfig& config() const noexcept { return config_; }
    void collect(ag::ParameterList& out) const;

    /// Loads config.json + model.safetensors from a Hugging Face style directory.
    static TransformerEncoder load_pretrained(const std::filesystem::path& dir);
    void save_pretrained(const std::filesystem::path& dir) const;

private:
    struct Block {
        Linear query, key, value, attn_out;
        LayerNorm attn_norm;
        Linear ffn_in, ffn_out;
        LayerNorm out_norm;
    };

    TransformerConfig config_;
    Tensor word_embeddings_;
    Tensor position_embeddings_;
    Tensor token_type_embeddings_;
    LayerNorm embedding_norm_;
    std::vector<Block> blocks_;
};

/// Scaled dot-product multi-head self-attention over the rows of x, returning
/// the concatenated per-head contexts (n x d).
Tensor multi_head_self_attention(const Tensor& x, const Linear& query, const Linear& key, const Linear& value,
                                 int heads);

}  // namespace newsrec::nn
