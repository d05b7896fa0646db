// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "newsrec/nn.hpp"
#include "newsrec/text_compose.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace newsrec {

enum class Architecture { NAML, NRMS, NPA };

std::string_view to_string(Architecture arch);
/// "naml", "nrms", "npa" (case-insensitive).
Architecture parse_architecture(std::string_view name);

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr std::string_view kToyPlm = "toy";
inline constexpr std::string_view kDistilBertPlm = "distilbert-base";
inline constexpr std::string_view kBertPlm = "bert-base";

/// Architecture plus every training hyperparameter. Defaults reproduce the
/// reference setup: AdamW at lr 1e-4, batch 128, 3 epochs, 50 history items,
/// 4 sampled negatives per click.
struct ModelConfig {
    Architecture arch = Architecture::NAML;
    /// "toy", "distilbert-base" or "bert-base".
    std::string plm_name = std::string(kDistilBertPlm);
    /// Hugging Face style directory (config.json, vocab.txt, model.safetensors)
    /// for pretrained encoders.
    std::string plm_path;
    /// Shape of the randomly initialised toy encoder; vocab_size is set from
    /// the training corpus.
    nn::TransformerConfig toy_encoder{nn::EncoderFlavor::DistilBert, 0, 64, 2, 4, 128, 512, 0, 1e-12, 0.02};

    int d_news = 256;
    int attn_hidden = 200;
    int n_heads = 8;
    int user_emb_dim = 50;

    int history_len = 50;
    int k_negatives = 4;
    double lr = 1e-4;
    int batch_size = 128;
    int epochs = 3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 1.0;

    int max_len_title = 96;
    int max_len_augmented = 160;
    text::CompositionMode mode = text::CompositionMode::TitleGenerated;
    std::uint64_t seed = 42;
    /// Non-reference fast path: keep the pretrained encoder fixed and train the heads only.
    bool freeze_encoder = false;

    int max_len() const;
    bool is_toy() const { return plm_name == kToyPlm; }

    /// Throws ConfigError describing the first violated invariant.
    void validate() const;

    nlohmann::json to_json() const;
    /// Missing fields keep their defaults; unknown fields are rejected.
    static ModelConfig from_json(const nlohmann::json& j);
};

}  // namespace newsrec
