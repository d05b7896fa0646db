// SPDX-License-Identifier: Apache-2.0
//
// News encoder (pretrained transformer + linear projection + additive
// attention pooling), the three user-encoder variants, and dot-product
// scoring.
#pragma once

#include "newsrec/autograd.hpp"
#include "newsrec/config.hpp"
#include "newsrec/mind_ingest.hpp"
#include "newsrec/nn.hpp"
#include "newsrec/tokenizer.hpp"

#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace newsrec::model {

using ag::Tensor;

/// score(h) = q . tanh(W h + b)
struct AdditiveAttention {
    nn::Linear projection;  // h -> attn_hidden
    Tensor query;           // (1 x attn_hidden)

    static AdditiveAttention init(ag::Index input_dim, ag::Index attn_hidden, std::mt19937_64& rng);
    void collect(ag::ParameterList& out, const std::string& prefix) const;
};

struct AttentionOutput {
    Tensor pooled;   // (1 x h)
    Tensor weights;  // (1 x n), zero on masked positions
};

/// Softmax-weighted sum of the rows of values (n x h). An empty mask means all
/// rows are valid; a mask with no valid entry throws std::invalid_argument.
AttentionOutput additive_attention(const Tensor& values, std::span<const int> mask, const AdditiveAttention& params);

class NewsEncoder {
public:
    NewsEncoder() = default;
    NewsEncoder(nn::TransformerEncoder plm, int d_news, int attn_hidden, int max_len, std::mt19937_64& rng);

    /// Encoder hidden states of the non-padding positions (n_valid x hidden).
    Tensor plm_states(const text::TokenizedNews& tokens) const;
    /// Projection + attention pooling over precomputed states.
    AttentionOutput pool(const Tensor& states) const;
    /// Full news vector (1 x d_news).
    Tensor encode(const text::TokenizedNews& tokens) const;

    const nn::TransformerEncoder& plm() const noexcept { return plm_; }
    int max_len() const noexcept { return max_len_; }
    void collect_plm(ag::ParameterList& out) const { plm_.collect(out); }
    void collect_head(ag::ParameterList& out) const;

private:
    void check(const text::TokenizedNews& tokens) const;

    nn::TransformerEncoder plm_;
    nn::Linear projection_;
    AdditiveAttention pooling_;
    int max_len_ = 0;
};

/// user_id -> embedding row; row 0 is the shared fallback for unseen users.
class UserVocab {
public:
    UserVocab() = default;
    static UserVocab build(const std::vector<mind::Impression>& impressions);

    int index_of(const std::string& user_id) const;
    std::size_t size() const noexcept { return ids_.size() + 1; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }

    nlohmann::json to_json() const;
    static UserVocab from_json(const nlohmann::json& j);

private:
    std::vector<std::string> ids_;
    std::unordered_map<std::string, int> index_;
};

struct UserEncoding {
    Tensor vector;   // (1 x d_news)
    Tensor weights;  // (1 x n) history attention; undefined for cold-start users
};

class UserEncoder {
public:
    UserEncoder() = default;
    UserEncoder(const ModelConfig& config, std::size_t n_users, std::mt19937_64& rng);

    /// history holds up to history_len news vectors (n x d_news), most recent
    /// last; an undefined or zero-row tensor selects the cold-start vector.
    UserEncoding encode(const Tensor& history, int user_index) const;

    void collect(ag::ParameterList& out) const;

private:
    Architecture arch_ = Architecture::NAML;
    int history_len_ = 0;
    int n_heads_ = 1;
    AdditiveAttention pooling_;
    nn::Linear self_query_, self_key_, self_value_;
    Tensor user_embedding_;
    nn::Linear personal_query_in_, personal_query_out_;
    Tensor cold_start_;
};

/// Dot product of equal-length vectors.
double score(std::span<const double> user, std::span<const double> news);
/// Scores for each row of candidates (m x d) against user (1 x d) as a (1 x m) row.
Tensor score_candidates(const Tensor& user, const Tensor& candidates);

class RecModel {
public:
    RecModel(ModelConfig config, text::WordPieceTokenizer tokenizer, UserVocab users, NewsEncoder news,
             UserEncoder user);

    /// Fresh model: random toy encoder or a pretrained one from config.plm_path.
    static RecModel create(const ModelConfig& config, text::WordPieceTokenizer tokenizer, UserVocab users);

    const ModelConfig& config() const noexcept { return config_; }
    const text::WordPieceTokenizer& tokenizer() const noexcept { return tokenizer_; }
    const UserVocab& users() const noexcept { return users_; }
    const NewsEncoder& news_encoder() const noexcept { return news_; }
    const UserEncoder& user_encoder() const noexcept { return user_; }

    /// Parameters updated by training (excludes the encoder when frozen).
    ag::ParameterList trainable_parameters() const;
    ag::ParameterList head_parameters() const;
    ag::ParameterList encoder_parameters() const;

private:
    ModelConfig config_;
    text::WordPieceTokenizer tokenizer_;
    UserVocab users_;
    NewsEncoder news_;
    UserEncoder user_;
};

/// Obtains the tokenizer a fresh model should use: the pretrained vocab.txt,
/// or a vocabulary built from the composed training texts for the toy encoder.
text::WordPieceTokenizer make_tokenizer(const ModelConfig& config, std::span<const std::string> composed_texts);

inline constexpr int kCheckpointFormatVersion = 1;

/// dir/encoder/{config.json, model.safetensors, vocab.txt},
/// dir/head.safetensors, dir/config.json (model config, tokenizer, users).
void save_checkpoint(const RecModel& model, const std::filesystem::path& dir);
RecModel load_checkpoint(const std::filesystem::path& dir);

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace newsrec::model
