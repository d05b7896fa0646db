// SPDX-License-Identifier: Apache-2.0

#include "newsrec/rec_models.hpp"

#include "newsrec/safetensors.hpp"

#include <fstream>
#include <stdexcept>

namespace newsrec::model {

namespace {

Tensor normal_parameter(ag::Index rows, ag::Index cols, std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    ag::Matrix m(rows, cols);
    for (ag::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = dist(rng);
    }
    return Tensor::parameter(std::move(m));
}

}  // namespace

// ---- additive attention -------------------------------------------------------

AdditiveAttention AdditiveAttention::init(ag::Index input_dim, ag::Index attn_hidden, std::mt19937_64& rng) {
    AdditiveAttention a;
    a.projection = nn::Linear::xavier(input_dim, attn_hidden, rng);
    a.query = nn::Linear::xavier(attn_hidden, 1, rng).weight;
    return a;
}

void AdditiveAttention::collect(ag::ParameterList& out, const std::string& prefix) const {
    projection.collect(out, prefix + ".projection");
    out.push_back({prefix + ".query", query, true});
}

AttentionOutput additive_attention(const Tensor& values, std::span<const int> mask, const AdditiveAttention& params) {
    if (values.rows() < 1) {
        throw std::invalid_argument("additive attention needs at least one position");
    }
    const Tensor hidden = ag::tanh(params.projection(values));
    const Tensor logits = ag::matmul_nt(params.query, hidden);  // (1 x n)
    AttentionOutput out;
    out.weights = ag::softmax_rows(logits, mask);
    out.pooled = ag::matmul(out.weights, values);
    return out;
}

// ---- news encoder -------------------------------------------------------------

NewsEncoder::NewsEncoder(nn::TransformerEncoder plm, int d_news, int attn_hidden, int max_len, std::mt19937_64& rng)
    : plm_(std::move(plm)), max_len_(max_len) {
    projection_ = nn::Linear::xavier(plm_.config().hidden, d_news, rng);
    pooling_ = AdditiveAttention::init(d_news, attn_hidden, rng);
}

void NewsEncoder::check(const text::TokenizedNews& tokens) const {
    if (tokens.max_len != max_len_ || tokens.token_ids.size() != static_cast<std::size_t>(max_len_) ||
        tokens.attention_mask.size() != static_cast<std::size_t>(max_len_)) {
        throw std::invalid_argument("tokenized length " + std::to_string(tokens.token_ids.size()) +
                                    " does not match the configured max_len " + std::to_string(max_len_));
    }
}

Tensor NewsEncoder::plm_states(const text::TokenizedNews& tokens) const {
    check(tokens);
    std::vector<std::int32_t> ids;
    std::vector<std::int32_t> positions;
    for (std::size_t i = 0; i < tokens.token_ids.size(); ++i) {
        if (tokens.attention_mask[i] != 0) {
            ids.push_back(tokens.token_ids[i]);
            positions.push_back(static_cast<std::int32_t>(i));
        }
    }
    if (ids.empty()) {
        throw std::invalid_argument("news input has no non-padding positions");
    }
    // Padding positions only ever act as masked keys, so dropping them leaves
    // the valid positions' states unchanged.
    return plm_.forward(ids, positions);
}

AttentionOutput NewsEncoder::pool(const Tensor& states) const {
    return additive_attention(projection_(states), {}, pooling_);
}

Tensor NewsEncoder::encode(const text::TokenizedNews& tokens) const { return pool(plm_states(tokens)).pooled; }

void NewsEncoder::collect_head(ag::ParameterList& out) const {
    projection_.collect(out, "news.projection");
    pooling_.collect(out, "news.attention");
}

// ---- users ----------------------------------------------------------------------

UserVocab UserVocab::build(const std::vector<mind::Impression>& impressions) {
    UserVocab v;
    for (const auto& imp : impressions) {
        if (!v.index_.contains(imp.user_id)) {
            v.ids_.push_back(imp.user_id);
            v.index_.emplace(imp.user_id, static_cast<int>(v.ids_.size()));
        }
    }
    return v;
}

int UserVocab::index_of(const std::string& user_id) const {
    auto it = index_.find(user_id);
    return it == index_.end() ? 0 : it->second;
}

nlohmann::json UserVocab::to_json() const { return ids_; }

UserVocab UserVocab::from_json(const nlohmann::json& j) {
    UserVocab v;
    for (const auto& id : j.get<std::vector<std::string>>()) {
        v.ids_.push_back(id);
        v.index_.emplace(id, static_cast<int>(v.ids_.size()));
    }
    return v;
}

UserEncoder::UserEncoder(const ModelConfig& config, std::size_t n_users, std::mt19937_64& rng)
    : arch_(config.arch), history_len_(config.history_len), n_heads_(config.n_heads) {
    pooling_ = AdditiveAttention::init(config.d_news, config.attn_hidden, rng);
    if (arch_ == Architecture::NRMS) {
        if (config.d_news % config.n_heads != 0) {
            throw ConfigError("d_news must be divisible by n_heads for nrms");
        }
        self_query_ = nn::Linear::xavier(config.d_news, config.d_news, rng);
        self_key_ = nn::Linear::xavier(config.d_news, config.d_news, rng);
        self_value_ = nn::Linear::xavier(config.d_news, config.d_news, rng);
    }
    if (arch_ == Architecture::NPA) {
        user_embedding_ = normal_parameter(static_cast<ag::Index>(n_users), config.user_emb_dim, rng, 0.1);
        personal_query_in_ = nn::Linear::xavier(config.user_emb_dim, config.attn_hidden, rng);
        personal_query_out_ = nn::Linear::xavier(config.attn_hidden, config.d_news, rng);
    }
    cold_start_ = normal_parameter(1, config.d_news, rng, 0.1);
}

UserEncoding UserEncoder::encode(const Tensor& history, int user_index) const {
    if (!history.defined() || history.rows() == 0) {
        return {cold_start_, {}};
    }
    if (history.rows() > history_len_) {
        throw std::logic_error("history of " + std::to_string(history.rows()) + " items exceeds history_len " +
                               std::to_string(history_len_));
    }
    switch (arch_) {
        case Architecture::NAML: {
            auto out = additive_attention(history, {}, pooling_);
            return {out.pooled, out.weights};
        }
        case Architecture::NRMS: {
            const Tensor contextual =
                nn::multi_head_self_attention(history, self_query_, self_key_, self_value_, n_heads_);
            auto out = additive_attention(contextual, {}, pooling_);
            return {out.pooled, out.weights};
        }
        case Architecture::NPA: {
            if (user_index < 0 || user_index >= user_embedding_.rows()) {
                throw std::out_of_range("user index out of range");
            }
            const std::array<ag::Index, 1> row{user_index};
            const Tensor embedding = ag::gather_rows(user_embedding_, row);
            const Tensor query = ag::tanh(personal_query_out_(ag::relu(personal_query_in_(embedding))));
            const Tensor weights = ag::softmax_rows(ag::matmul_nt(query, history));
            return {ag::matmul(weights, history), weights};
        }
    }
    throw std::logic_error("unreachable architecture");
}

void UserEncoder::collect(ag::ParameterList& out) const {
    pooling_.collect(out, "user.attention");
    if (arch_ == Architecture::NRMS) {
        self_query_.collect(out, "user.self_attention.query");
        self_key_.collect(out, "user.self_attention.key");
        self_value_.collect(out, "user.self_attention.value");
    }
    if (arch_ == Architecture::NPA) {
        out.push_back({"user.embedding", user_embedding_, false});
        personal_query_in_.collect(out, "user.personal_query.input");
        personal_query_out_.collect(out, "user.personal_query.output");
    }
    out.push_back({"user.cold_start", cold_start_, true});
}

// ---- scoring ----------------------------------------------------------------------

double score(std::span<const double> user, std::span<const double> news) {
    if (user.size() != news.size()) {
        throw std::invalid_argument("score: dimension mismatch (" + std::to_string(user.size()) + " vs " +
                                    std::to_string(news.size()) + ")");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < user.size(); ++i) {
        total += user[i] * news[i];
    }
    return total;
}

Tensor score_candidates(const Tensor& user, const Tensor& candidates) {
    if (user.rows() != 1 || user.cols() != candidates.cols()) {
        throw std::invalid_argument("score: dimension mismatch");
    }
    return ag::matmul_nt(user, candidates);
}

// ---- model ------------------------------------------------------------------------

RecModel::RecModel(ModelConfig config, text::WordPieceTokenizer tokenizer, UserVocab users, NewsEncoder news,
                   UserEncoder user)
    : config_(std::move(config)),
      tokenizer_(std::move(tokenizer)),
      users_(std::move(users)),
      news_(std::move(news)),
      user_(std::move(user)) {}

text::WordPieceTokenizer make_tokenizer(const ModelConfig& config, std::span<const std::string> composed_texts) {
    if (config.is_toy()) {
        return text::WordPieceTokenizer::build_from_corpus(composed_texts, "toy-wordpiece");
    }
    return text::WordPieceTokenizer::from_vocab_file(std::filesystem::path(config.plm_path) / "vocab.txt",
                                                     config.plm_name);
}

RecModel RecModel::create(const ModelConfig& config, text::WordPieceTokenizer tokenizer, UserVocab users) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    nn::TransformerEncoder plm;
    if (config.is_toy()) {
        auto enc = config.toy_encoder;
        enc.vocab_size = static_cast<int>(tokenizer.vocab_size());
        plm = nn::TransformerEncoder(enc, rng);
    } else {
        plm = nn::TransformerEncoder::load_pretrained(config.plm_path);
    }
    if (tokenizer.vocab_size() > static_cast<std::size_t>(plm.config().vocab_size)) {
        throw ConfigError("tokenizer vocabulary is larger than the encoder's embedding table");
    }
    if (plm.config().max_positions < config.max_len()) {
        throw ConfigError("encoder supports " + std::to_string(plm.config().max_positions) +
                          " positions, fewer than max_len " + std::to_string(config.max_len()));
    }
    NewsEncoder news(std::move(plm), config.d_news, config.attn_hidden, config.max_len(), rng);
    UserEncoder user(config, users.size(), rng);
    return RecModel(config, std::move(tokenizer), std::move(users), std::move(news), std::move(user));
}

ag::ParameterList RecModel::encoder_parameters() const {
    ag::ParameterList out;
    news_.collect_plm(out);
    return out;
}

ag::ParameterList RecModel::head_parameters() const {
    ag::ParameterList out;
    news_.collect_head(out);
    user_.collect(out);
    return out;
}

ag::ParameterList RecModel::trainable_parameters() const {
    ag::ParameterList out = config_.freeze_encoder ? ag::ParameterList{} : encoder_parameters();
    auto head = head_parameters();
    out.insert(out.end(), head.begin(), head.end());
    return out;
}

void save_checkpoint(const RecModel& model, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "encoder");
    model.news_encoder().plm().save_pretrained(dir / "encoder");
    model.tokenizer().save_vocab(dir / "encoder" / "vocab.txt");
    safetensors::save(dir / "head.safetensors", model.head_parameters(), safetensors::DType::F64);
    const nlohmann::json sidecar = {
        {"format_version", kCheckpointFormatVersion},
        {"model_config", model.config().to_json()},
        {"tokenizer", model.tokenizer().name()},
        {"users", model.users().to_json()},
    };
    std::ofstream out(dir / "config.json", std::ios::trunc);
    if (!out) {
        throw CheckpointError("cannot write " + (dir / "config.json").string());
    }
    out << sidecar.dump(2) << "\n";
}

RecModel load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "config.json");
    if (!in) {
        throw CheckpointError("no checkpoint sidecar at " + (dir / "config.json").string());
    }
    nlohmann::json sidecar;
    try {
        sidecar = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint sidecar: ") + e.what());
    }
    if (sidecar.value("format_version", 0) != kCheckpointFormatVersion) {
        throw CheckpointError("unsupported checkpoint format version");
    }
    try {
        const ModelConfig config = ModelConfig::from_json(sidecar.at("model_config"));
        auto tokenizer = text::WordPieceTokenizer::from_vocab_file(dir / "encoder" / "vocab.txt",
                                                                   sidecar.at("tokenizer").get<std::string>());
        auto users = UserVocab::from_json(sidecar.at("users"));
        auto plm = nn::TransformerEncoder::load_pretrained(dir / "encoder");
        std::mt19937_64 rng(config.seed);
        NewsEncoder news(std::move(plm), config.d_news, config.attn_hidden, config.max_len(), rng);
        UserEncoder user(config, users.size(), rng);
        RecModel model(config, std::move(tokenizer), std::move(users), std::move(news), std::move(user));
        auto head = model.head_parameters();
        safetensors::assign(head, safetensors::load(dir / "head.safetensors"));
        return model;
    } catch (const CheckpointError&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointError("checkpoint " + dir.string() + " does not match its config: " + e.what());
    }
}

}  // namespace newsrec::model
