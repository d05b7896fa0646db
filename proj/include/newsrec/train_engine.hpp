// SPDX-License-Identifier: Apache-2.0
//
// Negative-sampled training (one click + K sampled non-clicks per sample,
// softmax ranking loss, AdamW) and impression-level evaluation.
#pragma once

#include "newsrec/category_describe.hpp"
#include "newsrec/config.hpp"
#include "newsrec/eval_metrics.hpp"
#include "newsrec/mind_ingest.hpp"
#include "newsrec/rec_models.hpp"
#include "newsrec/text_compose.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace newsrec::train {

struct TrainingSample {
    std::string user_id;
    std::vector<std::string> history;     // most recent history_len items, oldest first
    std::vector<std::string> candidates;  // k_negatives + 1 items
    std::size_t label_index = 0;
};

struct SamplingStats {
    std::size_t impressions = 0;
    std::size_t samples = 0;
    std::size_t skipped_no_negative = 0;
    std::size_t skipped_unknown_news = 0;
};

/// One sample per clicked candidate. Negatives are drawn uniformly from the
/// impression's non-clicked candidates, without replacement when at least k
/// exist and with replacement otherwise; candidate order is shuffled.
std::vector<TrainingSample> build_training_samples(const mind::Impression& impression, int k_negatives,
                                                   int history_len, std::mt19937_64& rng,
                                                   SamplingStats* stats = nullptr);

/// Cross-entropy of softmax(scores) against label_index, max-shifted.
double ranking_softmax_loss(std::span<const double> scores, std::size_t label_index);
/// d loss / d scores = softmax(scores) - onehot(label_index).
std::vector<double> ranking_softmax_loss_gradient(std::span<const double> scores, std::size_t label_index);

/// Decoupled weight decay Adam.
class AdamW {
public:
    struct Options {
        double lr = 1e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.01;
    };

    AdamW(ag::ParameterList params, Options options);

    /// Applies one update from the accumulated gradients.
    void step();
    void zero_grad();
    const Options& options() const noexcept { return options_; }

private:
    ag::ParameterList params_;
    Options options_;
    std::vector<ag::Matrix> m_, v_;
    long step_ = 0;
};

/// Scales gradients so their global L2 norm is at most max_norm; returns the
/// norm before clipping.
double clip_grad_norm(const ag::ParameterList& params, double max_norm);

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    std::size_t samples = 0;
    std::size_t batches = 0;
    double wall_seconds = 0.0;

    nlohmann::json to_json() const;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::size_t sample_count = 0;
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;
    AdamW::Options optimizer;
    double clip_norm = 0.0;
    SamplingStats sampling;

    std::vector<double> losses() const;
    /// One JSON record per epoch, each carrying the run-level settings.
    std::vector<nlohmann::json> json_lines() const;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainOptions {
    /// Checkpoints (epoch-N/ and final/) and train_report.jsonl go here when set.
    std::optional<std::filesystem::path> out_dir;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    model::RecModel model;
    TrainReport report;
};

/// Builds the tokenizer, corpus and model for config, then trains for
/// config.epochs passes, resampling negatives every epoch.
TrainResult train(const ModelConfig& config, const std::vector<mind::NewsArticle>& articles,
                  const std::vector<mind::Impression>& impressions, const describe::DescriptionCache* cache,
                  const TrainOptions& options = {});

/// Continues from an existing model (used by train()).
TrainReport train_model(model::RecModel& model, const text::NewsCorpus& corpus,
                        const std::vector<mind::Impression>& impressions, const TrainOptions& options = {});

/// Tokenised inputs for articles under the model's own mode and tokenizer.
text::NewsCorpus corpus_for(const model::RecModel& model, const std::vector<mind::NewsArticle>& articles,
                            const describe::DescriptionCache* cache);

/// Scores every candidate of every impression and averages the four metrics.
/// News vectors are computed once per distinct article.
metrics::MetricReport evaluate(const model::RecModel& model, const std::vector<mind::Impression>& impressions,
                               const text::NewsCorpus& corpus);

/// Per-impression candidate scores, in candidate order (empty when skipped
/// for unknown news).
std::vector<std::vector<double>> score_impressions(const model::RecModel& model,
                                                   const std::vector<mind::Impression>& impressions,
                                                   const text::NewsCorpus& corpus, bool cache_news_vectors = true);

}  // namespace newsrec::train
